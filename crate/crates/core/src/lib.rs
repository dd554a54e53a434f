//! A small, from-scratch neural-network library for digit classification
//! experiments: pre-training a bias-free MLP on a subset of the ten digits,
//! then teaching it the held-out digits from a handful of samples using
//! enriched mini-batches and per-sample stop criteria.
//!
//! The crate is organised around the experiment pipeline:
//!
//! - [`linalg`] — dense row-major `f64` matrix kernels
//! - [`dataset`] — IDX file parsing, pixel scaling, digit filtering, seeded
//!   sampling, and a synthetic digit corpus for self-contained runs
//! - [`network`] — the bias-free MLP, its activation, loss, analytic
//!   backward pass, and a finite-difference gradient oracle
//! - [`trainer`] — SGD with per-layer learning-rate factors, weight
//!   clipping, and the batch pre-training loop
//! - [`fewshot`] — the shot protocol: enrichment, stop criteria, frozen
//!   layers, and the buffer-enriched shot-based pre-training variant
//! - [`eval`] — argmax prediction and the four accuracy metrics
//!
//! Everything is deterministic given a seed: the single RNG algorithm lives
//! in [`rng`] and every sampling path threads an explicit generator.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod trainer;

pub use dataset::{DigitPartition, LabeledSet, Split};
pub use error::{Error, Result};
pub use eval::MetricsRow;
pub use fewshot::{ShotConfig, ShotResult};
pub use linalg::Matrix;
pub use network::{ActivationSpec, Mlp};
pub use rng::SeededRng;
pub use trainer::{TrainConfig, TrainReport};
