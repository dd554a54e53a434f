//! The four commands. Each takes the resolved config plus a [`RunCtx`] it
//! records produced files and the dataset source into; the caller turns
//! that into the run manifest whether the command succeeds or fails.

pub mod fewshot;
pub mod gradcheck;
pub mod pretrain;
pub mod report;

use std::path::PathBuf;

use crate::config::DataSource;

#[derive(Debug, Default)]
pub struct RunCtx {
    /// Output files written so far, relative to the run directory.
    pub produced: Vec<PathBuf>,
    pub dataset_source: Option<DataSource>,
}

impl RunCtx {
    pub fn record(&mut self, file: impl Into<PathBuf>) {
        self.produced.push(file.into());
    }
}
