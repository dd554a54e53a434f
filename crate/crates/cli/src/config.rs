//! Experiment configuration: a versioned JSON schema with flag overrides.
//!
//! A config file never has to be complete: every field has a default, so
//! `{"version": 1}` is a valid config and the flags `--seed`, `--out`,
//! `--variant` and `--shots` override whatever the file says. The resolved
//! config (file + overrides) is what runs and what the manifest echoes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fewnist::dataset::synth::{self, SynthConfig};
use fewnist::{DigitPartition, LabeledSet, ShotConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// Where the four IDX files live. When none of them exist the loader falls
/// back to the deterministic synthetic corpus, so runs work out of the box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            train_images: "data/train-images-idx3-ubyte".into(),
            train_labels: "data/train-labels-idx1-ubyte".into(),
            test_images: "data/test-images-idx3-ubyte".into(),
            test_labels: "data/test-labels-idx1-ubyte".into(),
        }
    }
}

impl DataPaths {
    pub fn all(&self) -> [&Path; 4] {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
    }

    /// Load the train and test sets. All four files present: parse them.
    /// None present: generate the synthetic corpus. A partial set of files
    /// is an error rather than a silent fallback.
    pub fn load(&self) -> Result<(LabeledSet, LabeledSet, DataSource)> {
        let present = self.all().iter().filter(|p| p.exists()).count();
        match present {
            4 => {
                let train = LabeledSet::from_idx_files(
                    &self.train_images,
                    &self.train_labels,
                    fewnist::Split::Train,
                )
                .with_context(|| format!("loading {}", self.train_images.display()))?;
                let test = LabeledSet::from_idx_files(
                    &self.test_images,
                    &self.test_labels,
                    fewnist::Split::Test,
                )
                .with_context(|| format!("loading {}", self.test_images.display()))?;
                Ok((train, test, DataSource::Idx))
            }
            0 => {
                log::info!("no IDX files found, generating the synthetic corpus");
                let (train, test) = synth::labeled_sets(&SynthConfig::default())?;
                Ok((train, test, DataSource::Synthetic))
            }
            n => bail!(
                "found {n} of 4 dataset files (looked for {}); \
                 provide all four or none",
                self.train_images.display()
            ),
        }
    }
}

/// What the loader actually used; recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Idx,
    Synthetic,
}

/// Which experiment wiring a run uses. Everything except `main` alters one
/// knob: `no_freeze` trains all layers, `no_enrich` drops the enrichment
/// samples, `reduced_lr_0.01` slows the first layer instead of freezing it,
/// and `fewshot_pretrain` replaces batch pre-training with the shot
/// procedure itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Main,
    NoFreeze,
    NoEnrich,
    #[serde(rename = "reduced_lr_0.01")]
    ReducedLr,
    FewshotPretrain,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Main,
        Variant::NoFreeze,
        Variant::NoEnrich,
        Variant::ReducedLr,
        Variant::FewshotPretrain,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Main => "main",
            Variant::NoFreeze => "no_freeze",
            Variant::NoEnrich => "no_enrich",
            Variant::ReducedLr => "reduced_lr_0.01",
            Variant::FewshotPretrain => "fewshot_pretrain",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .with_context(|| {
                let known: Vec<_> = Variant::ALL.iter().map(|v| v.tag()).collect();
                format!("unknown variant {s:?}, expected one of {}", known.join(", "))
            })
    }

    /// Per-layer learning-rate factors for the shot phase.
    pub fn layer_lr_factors(self) -> [f64; 3] {
        match self {
            Variant::Main | Variant::NoEnrich | Variant::FewshotPretrain => [0.0, 1.0, 1.0],
            Variant::NoFreeze => [1.0, 1.0, 1.0],
            Variant::ReducedLr => [0.01, 1.0, 1.0],
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_novel_digits() -> Vec<u8> {
    DigitPartition::default().novel_digits().to_vec()
}

fn default_n_shots() -> usize {
    10
}

fn default_fewshot_pretrain_shots() -> u64 {
    fewnist::fewshot::FewshotPretrainConfig::default().n_shots
}

fn default_buffer_cap() -> usize {
    fewnist::fewshot::FewshotPretrainConfig::default().buffer_cap
}

fn default_out_dir() -> PathBuf {
    "runs/latest".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub data: DataPaths,
    /// Digits withheld from pre-training and taught by shots.
    #[serde(default = "default_novel_digits")]
    pub novel_digits: Vec<u8>,
    /// Batch pre-training phase. Its `seed` and the shot seed are both
    /// overwritten by the master `seed` below when the config resolves.
    #[serde(default)]
    pub train: TrainConfig,
    /// Shot phase. `layer_lr_factors` (and `enrichment_count` for
    /// `no_enrich`) are overwritten by the variant when the config resolves.
    #[serde(default)]
    pub shot: ShotConfig,
    /// Shot count for the `fewshot_pretrain` pre-training phase.
    #[serde(default = "default_fewshot_pretrain_shots")]
    pub fewshot_pretrain_shots: u64,
    /// Recent-sample buffer capacity for the `fewshot_pretrain` phase.
    #[serde(default = "default_buffer_cap")]
    pub buffer_cap: usize,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_n_shots")]
    pub n_shots: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Master seed. Component streams derive from it by fixed offsets:
    /// training +1, shots/enrichment +2, evaluation +3.
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            data: DataPaths::default(),
            novel_digits: default_novel_digits(),
            train: TrainConfig::default(),
            shot: ShotConfig::default(),
            fewshot_pretrain_shots: default_fewshot_pretrain_shots(),
            buffer_cap: default_buffer_cap(),
            variant: Variant::Main,
            n_shots: default_n_shots(),
            out_dir: default_out_dir(),
            seed: 0,
        }
    }
}

/// The flag overrides shared by `pretrain` and `fewshot`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub variant: Option<String>,
    pub shots: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            bail!(
                "config {} has schema version {}, this build reads version {}",
                path.display(),
                cfg.version,
                CONFIG_VERSION
            );
        }
        Ok(cfg)
    }

    /// File config (or defaults) + flag overrides + variant wiring. The
    /// result is self-contained: the master seed has been pushed into the
    /// component configs and the variant into the shot factors.
    pub fn resolve(file: Option<&Path>, over: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = over.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &over.out {
            cfg.out_dir = out.clone();
        }
        if let Some(tag) = &over.variant {
            cfg.variant = Variant::parse(tag)?;
        }
        if let Some(shots) = over.shots {
            cfg.n_shots = shots;
        }
        cfg.train.seed = cfg.seed;
        cfg.shot.seed = cfg.seed;
        cfg.shot.layer_lr_factors = cfg.variant.layer_lr_factors().to_vec();
        if cfg.variant == Variant::NoEnrich {
            cfg.shot.enrichment_count = 0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.partition()?;
        self.train
            .validate(3)
            .context("train section of the config")?;
        self.shot.validate(3).context("shot section of the config")?;
        if self.buffer_cap == 0 {
            bail!("buffer_cap must be at least 1");
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<DigitPartition> {
        DigitPartition::new(&self.novel_digits).context("novel_digits in the config")
    }
}
