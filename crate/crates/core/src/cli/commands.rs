use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    clips_from_manifest, load_checkpoint, load_manifest, merge_splits, save_checkpoint, synth_dataset, Checkpoint,
    DatasetManifest, FeatureCache, SynthSpec,
};
use crate::dsp::{log_mel_with, read_wav};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_all, EvalCorpus, EvalItem, MetricReport};
use crate::model::{greedy_decode, Model};
use crate::numerics::{OpKind, Tensor};
use crate::text::{read_embeddings, tokenize, train_word2vec, write_embeddings, Vocabulary};
use crate::training::{gradient_report, train, GradRow, LossCsv, TrainReport};

use super::config::{RunConfig, SplitPaths};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CACHE_DIR: &str = "cache";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepareSummary {
    pub clips: usize,
    pub vocab_size: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

fn train_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let mut splits = cfg.paths.train.iter();
    let first = splits
        .next()
        .ok_or_else(|| Error::Config("paths.train lists no manifests".into()))?;
    let mut merged = load_manifest(&first.manifest, &first.audio)?;
    for s in splits {
        merged = merge_splits(&merged, &load_manifest(&s.manifest, &s.audio)?)?;
    }
    Ok(merged)
}

fn cache(cfg: &RunConfig) -> Result<FeatureCache> {
    FeatureCache::new(&cfg.run_dir().join(CACHE_DIR), cfg.dsp.clone())
}

/// Builds the vocabulary, optional word2vec vectors and the feature cache
/// for the training (and evaluation) clips.
pub fn prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    cfg.validate()?;
    cfg.echo()?;
    let dir = cfg.run_dir();
    let manifest = train_manifest(cfg)?;
    let captions: Vec<&str> = manifest.rows.iter().flat_map(|r| r.captions.iter().map(String::as_str)).collect();
    let vocab = Vocabulary::build(&captions, cfg.text.min_count)?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    log::info!("vocabulary: {} tokens ({} reserved)", vocab.len(), vocab.len() - vocab.corpus_len());

    if cfg.text.pretrain_embeddings {
        let sentences: Vec<Vec<usize>> = captions.iter().map(|c| vocab.word_ids(c)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let out = train_word2vec(&sentences, vocab.len(), &cfg.text.word2vec, &mut rng)?;
        write_embeddings(&dir.join(EMBEDDINGS_FILE), &out.embeddings)?;
    }

    let cache = cache(cfg)?;
    let mut rows: Vec<PathBuf> = manifest.rows.iter().map(|r| r.path.clone()).collect();
    if let Some(eval) = &cfg.paths.eval {
        rows.extend(load_manifest(&eval.manifest, &eval.audio)?.rows.into_iter().map(|r| r.path));
    }
    let mut hits = 0;
    for path in &rows {
        hits += cache.features(path)?.1 as usize;
    }
    Ok(PrepareSummary {
        clips: manifest.len(),
        vocab_size: vocab.len(),
        cache_hits: hits,
        cache_misses: rows.len() - hits,
    })
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    let path = cfg.run_dir().join(VOCAB_FILE);
    if !path.is_file() {
        return Err(Error::Input(format!(
            "{} not found; run `cl4ac prepare` with this config first",
            path.display()
        )));
    }
    Vocabulary::load(&path)
}

/// Trains from scratch, streaming `loss.csv` and rewriting `model.ckpt`
/// after every epoch.
pub fn train_run(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    cfg.echo()?;
    let dir = cfg.run_dir();
    let vocab = load_vocab(cfg)?;
    let clips = clips_from_manifest(&train_manifest(cfg)?, &cache(cfg)?, &vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut model = Model::<f32>::new(&cfg.model, vocab.len(), &mut rng)?;
    let emb_path = dir.join(EMBEDDINGS_FILE);
    if cfg.text.pretrain_embeddings && emb_path.is_file() {
        let emb = read_embeddings(&emb_path)?;
        if emb.rows != vocab.len() || emb.dim != cfg.model.decoder.width {
            return Err(Error::Input(format!(
                "{} holds {}×{} vectors, model needs {}×{}; rerun prepare",
                emb_path.display(),
                emb.rows,
                emb.dim,
                vocab.len(),
                cfg.model.decoder.width
            )));
        }
        let id = model.net.embedding_id();
        model.params.set_value(id, Tensor::new(&[emb.rows, emb.dim], emb.data)?)?;
    }
    let mut log = LossCsv::create(&dir.join(LOSS_FILE))?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let ckpt_cfg = cfg.checkpoint_config();
    let report = train(
        &clips,
        &mut model,
        &cfg.train,
        |row| log.write(row),
        |epoch, model| {
            save_checkpoint(
                &ckpt_path,
                &Checkpoint {
                    config: ckpt_cfg.clone(),
                    vocab: vocab.clone(),
                    model: model.clone(),
                },
            )?;
            log::info!("epoch {epoch} done, checkpoint {}", ckpt_path.display());
            Ok(())
        },
    )?;
    log.into_inner()?;
    Ok(report)
}

/// Greedy caption for one WAV file, reserved tokens removed.
pub fn caption_wav(ckpt: &Checkpoint, wav: &Path, max_len: usize) -> Result<String> {
    let clip = read_wav(wav)?;
    let mel = log_mel_with(&clip, &ckpt.config.dsp).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", wav.display())),
        other => other,
    })?;
    let ids = greedy_decode(&ckpt.model, &mel, max_len)?;
    Ok(ckpt.vocab.decode(&ids))
}

fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(str::to_string).collect()
}

/// Scores one candidate per manifest row against that row's captions.
pub fn score_candidates(manifest: &DatasetManifest, candidates: &[String]) -> Result<MetricReport> {
    if candidates.len() != manifest.len() {
        return Err(Error::Contract(format!(
            "{} candidates for {} clips",
            candidates.len(),
            manifest.len()
        )));
    }
    let items = manifest
        .rows
        .iter()
        .zip(candidates)
        .map(|(row, cand)| EvalItem {
            candidate: words(cand),
            references: row.captions.iter().map(|c| words(c)).collect(),
        })
        .collect();
    evaluate_all(&EvalCorpus::new(items)?)
}

/// Captions every clip of `split` and writes `captions.csv`, `metrics.csv`
/// and `metrics.json` into `out_dir`.
pub fn evaluate_split(ckpt: &Checkpoint, split: &SplitPaths, out_dir: &Path, max_len: usize) -> Result<MetricReport> {
    let manifest = load_manifest(&split.manifest, &split.audio)?;
    let cache = FeatureCache::new(&out_dir.join(CACHE_DIR), ckpt.config.dsp.clone())?;
    let mut candidates = Vec::with_capacity(manifest.len());
    for row in &manifest.rows {
        let (mel, _) = cache.features(&row.path)?;
        candidates.push(ckpt.vocab.decode(&greedy_decode(&ckpt.model, &mel, max_len)?));
    }
    let report = score_candidates(&manifest, &candidates)?;
    let path = out_dir.join("captions.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["file_name", "caption"]).map_err(csv_err)?;
    for (row, cand) in manifest.rows.iter().zip(&candidates) {
        w.write_record([row.file_name.as_str(), cand.as_str()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    report.write(out_dir, "metrics")?;
    Ok(report)
}

pub fn open_checkpoint(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path, None)
}

/// Runs the gradient report; `fault` names an operation whose backward rule
/// is deliberately broken.
pub fn gradcheck_rows(fault: Option<&str>) -> Result<Vec<GradRow>> {
    let fault = fault
        .map(|name| OpKind::from_name(name).ok_or_else(|| Error::Input(format!("unknown operation {name:?}"))))
        .transpose()?;
    gradient_report(fault)
}

pub fn format_grad_table(rows: &[GradRow]) -> String {
    let mut out = format!("{:<26} {:>14} {:>12}  status\n", "family", "max_rel_error", "coordinates");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<26} {:>14.3e} {:>12}  {}",
            r.family,
            r.check.max_rel_error,
            r.check.coordinates,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    out
}

pub fn synth(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    synth_dataset(spec, out)?;
    let csv = out.join("synth.csv");
    fs::metadata(&csv).map_err(|e| Error::io(&csv, e))?;
    Ok(csv)
}
