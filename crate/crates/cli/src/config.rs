use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use knnmt::eval::{Grids, Metric};
use knnmt::synth::WorldConfig;
use knnmt::{DecodeParams, IndexParams};
use serde::{Deserialize, Serialize};

/// First sentence id of each split. Equal ids across languages share a
/// concept sequence, so the splits stay disjoint in every language.
pub const TRAIN_FIRST_ID: u32 = 0;
pub const DEV_FIRST_ID: u32 = 1_000_000;
pub const TEST_FIRST_ID: u32 = 2_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub lang: String,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    #[serde(default = "default_mean_length")]
    pub mean_length: usize,
}

fn default_mean_length() -> usize {
    10
}

fn default_index() -> IndexParams {
    IndexParams::flat()
}

fn default_metric() -> Metric {
    Metric::Accuracy
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub world: WorldConfig,
    pub corpora: Vec<CorpusSpec>,
    /// Named merged stores: each lists the bilingual stores (by language) it combines.
    #[serde(default)]
    pub merged: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_index")]
    pub index: IndexParams,
    #[serde(default = "Grids::standard")]
    pub grids: Grids,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(knnmt::Error::from)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.world.validate()?;
        let known: Vec<&str> = self.world.languages.iter().map(|l| l.code.as_str()).collect();
        for c in &self.corpora {
            if !known.contains(&c.lang.as_str()) {
                bail!(usage(format!("corpus language {:?} is not in the world", c.lang)));
            }
            if c.mean_length == 0 {
                bail!(usage(format!("corpus {:?} needs a positive mean_length", c.lang)));
            }
        }
        for (name, members) in &self.merged {
            if members.is_empty() {
                bail!(usage(format!("merged store {name:?} lists no languages")));
            }
            for m in members {
                if self.corpus(m).is_none() {
                    bail!(usage(format!("merged store {name:?} refers to {m:?}, which has no corpus")));
                }
            }
        }
        self.grids.normalized()?;
        Ok(())
    }

    pub fn corpus(&self, lang: &str) -> Option<&CorpusSpec> {
        self.corpora.iter().find(|c| c.lang == lang)
    }
}

/// A command-line misuse; exits with status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> Usage {
    Usage(msg.into())
}
