use std::sync::Arc;

use crate::error::Result;
use crate::text::Vocabulary;
use crate::training::ClipData;

use super::{DatasetManifest, FeatureCache};

/// Features and encoded captions for every manifest row.
pub fn clips_from_manifest(manifest: &DatasetManifest, cache: &FeatureCache, vocab: &Vocabulary) -> Result<Vec<ClipData>> {
    manifest
        .rows
        .iter()
        .map(|row| {
            let (mel, _) = cache.features(&row.path)?;
            Ok(ClipData {
                name: row.file_name.clone(),
                mel: Arc::new(mel),
                captions: row.captions.iter().map(|c| vocab.encode(c)).collect(),
            })
        })
        .collect()
}
