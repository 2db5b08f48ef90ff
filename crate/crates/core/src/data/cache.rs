use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dsp::{decode_wav, log_mel_with, DspConfig, MelSpectrogram};
use crate::error::{Error, Result};

const MEL_MAGIC: &[u8; 4] = b"CL4M";

/// Hex SHA-256 of the audio bytes followed by the JSON of the feature settings.
pub fn cache_key(audio: &[u8], cfg: &DspConfig) -> String {
    let mut h = Sha256::new();
    h.update(audio);
    h.update([0u8]);
    h.update(serde_json::to_vec(cfg).expect("dsp config serializes"));
    hex::encode(h.finalize())
}

/// Log-mel features on disk, one `<key>.mel` file per distinct
/// (audio content, settings) pair. Entries are written to a temporary file
/// and renamed into place, so readers never see partial files.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    dir: PathBuf,
    cfg: DspConfig,
}

impl FeatureCache {
    pub fn new(dir: &Path, cfg: DspConfig) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(FeatureCache {
            dir: dir.to_path_buf(),
            cfg,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Features for the WAV at `audio`, and whether they came from the cache.
    pub fn features(&self, audio: &Path) -> Result<(MelSpectrogram, bool)> {
        let bytes = fs::read(audio).map_err(|e| Error::io(audio, e))?;
        let entry = self.dir.join(format!("{}.mel", cache_key(&bytes, &self.cfg)));
        if entry.is_file() {
            log::info!("cache hit {}", audio.display());
            return Ok((read_mel(&entry)?, true));
        }
        let clip = decode_wav(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", audio.display())),
            other => other,
        })?;
        let mel = log_mel_with(&clip, &self.cfg).map_err(|e| match e {
            Error::Input(msg) => Error::Input(format!("{}: {msg}", audio.display())),
            other => other,
        })?;
        write_atomic(&entry, &encode_mel(&mel))?;
        log::info!("cache miss {}", audio.display());
        Ok((mel, false))
    }
}

fn encode_mel(mel: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * mel.data.len());
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&(mel.bands as u32).to_le_bytes());
    out.extend_from_slice(&(mel.frames as u32).to_le_bytes());
    for v in &mel.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_mel(path: &Path) -> Result<MelSpectrogram> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |offset: usize, reason: &str| Error::Corruption {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[..4] != MEL_MAGIC {
        return Err(corrupt(0, "not a feature cache entry"));
    }
    let bands = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let want = 12 + 4 * bands * frames;
    if bytes.len() != want {
        return Err(corrupt(bytes.len().min(want), "feature payload has the wrong length"));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::new(bands, frames, data)
}

/// Writes `bytes` next to `path` under a temporary name, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
