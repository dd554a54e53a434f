//! The run manifest: everything needed to reproduce or audit a run.
//!
//! One `manifest.json` is written into the output directory of every
//! command, on success and on failure alike. Re-running the `config` block
//! of a manifest reproduces the run's CSV output byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "message")]
pub enum RunStatus {
    Ok,
    Error(String),
}

/// The derived per-stream seeds, spelled out so a reader never has to know
/// the offset convention to audit a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEcho {
    pub master: u64,
    pub train_stream: u64,
    pub shot_stream: u64,
    pub eval_stream: u64,
}

impl SeedEcho {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            train_stream: fewnist::rng::train_seed(master),
            shot_stream: fewnist::rng::shot_seed(master),
            eval_stream: fewnist::rng::eval_seed(master),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub status: RunStatus,
    pub code_version: String,
    pub started_utc: String,
    pub finished_utc: String,
    pub seeds: SeedEcho,
    pub dataset_source: Option<DataSource>,
    /// Paths relative to the manifest's directory.
    pub produced_files: Vec<PathBuf>,
    /// The fully resolved config this run executed.
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
