use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::CheckpointConfig;
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::text::Word2VecConfig;
use crate::training::TrainConfig;

/// Environment variable that overrides `paths.run_dir`.
pub const RUN_DIR_ENV: &str = "CL4AC_RUN_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    /// Words seen fewer times map to `<unk>`.
    pub min_count: usize,
    /// Initialize the token table from word2vec vectors trained on the
    /// training captions.
    pub pretrain_embeddings: bool,
    pub word2vec: Word2VecConfig,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            min_count: 1,
            pretrain_embeddings: true,
            word2vec: Word2VecConfig::default(),
        }
    }
}

/// A caption CSV and the directory its `file_name` column refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPaths {
    pub manifest: PathBuf,
    pub audio: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub run_dir: PathBuf,
    /// Training splits, merged in order.
    pub train: Vec<SplitPaths>,
    pub eval: Option<SplitPaths>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            run_dir: PathBuf::from("runs/default"),
            train: Vec::new(),
            eval: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dsp: DspConfig,
    pub text: TextConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    /// Reads a config file (or starts from defaults) and applies the
    /// run-directory override from the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(dir) = std::env::var_os(RUN_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.paths.run_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.text.pretrain_embeddings {
            self.text.word2vec.validate()?;
            if self.text.word2vec.dim != self.model.decoder.width {
                return Err(Error::Config(format!(
                    "word2vec dim {} must equal the decoder width {}",
                    self.text.word2vec.dim, self.model.decoder.width
                )));
            }
        }
        Ok(())
    }

    pub fn checkpoint_config(&self) -> CheckpointConfig {
        CheckpointConfig {
            model: self.model.clone(),
            dsp: self.dsp.clone(),
        }
    }

    pub fn run_dir(&self) -> &Path {
        &self.paths.run_dir
    }

    /// Writes the resolved configuration to `effective_config.json` in the run directory.
    pub fn echo(&self) -> Result<PathBuf> {
        let dir = self.run_dir();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("effective_config.json");
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
