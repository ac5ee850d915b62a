//! Run configuration, read from TOML. Every field has a default and unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skelmesh::fusion::Stage2Config;
use skelmesh::hand::{RigConfig, SynthConfig, DEFAULT_DUP_THRESHOLD};
use skelmesh::s2m::{S2MConfig, Stage1Config};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives dataset generation, weight initialization and shuffling.
    pub seed: u64,
    /// `builtin` or a template container path.
    pub template: String,
    pub dup_threshold: f64,
    pub rig: RigConfig,
    pub synth: SynthConfig,
    pub model: S2MConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Number of samples `gen-data` writes.
    pub samples: usize,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            out_dir: "out".into(),
            samples: 5000,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            template: "builtin".into(),
            dup_threshold: DEFAULT_DUP_THRESHOLD,
            rig: RigConfig::default(),
            synth: SynthConfig::default(),
            model: S2MConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    /// Makes `seed` the source of every random stream.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.stage1.seed = seed;
        self.stage2.seed = seed;
    }
}
