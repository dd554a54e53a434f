//! The shot protocol: one new sample enriched with four known ones,
//! gradient descent until the new sample passes both stop criteria, first
//! layer frozen. Also the few-shot-as-pretraining variant that enriches
//! from a buffer of the last four used samples instead of a fixed
//! pre-training pool.

use std::collections::VecDeque;

use crate::dataset::{DigitPartition, LabeledSet, Split, IMAGE_PIXELS};
use crate::error::{Error, Result};
use crate::eval::{Evaluator, MetricsRow};
use crate::linalg::Matrix;
use crate::network::{loss, one_hot_batch, Mlp};
use crate::rng::{eval_seed, shot_seed, SeededRng};
use crate::trainer::{sgd_step, ConfigEcho, GradNorm, LossSample, TrainConfig, TrainReport};

/// Default learning rate for shot descent. Shots take many consecutive
/// steps on one tiny batch, and at the batch-training rate of 1.0 that can
/// push an output so deep into the activation clamp that its derivative
/// underflows and the descent stalls at the step cap; 0.7 stays clear of
/// that while still converging in a handful of steps.
pub const DEFAULT_SHOT_LEARNING_RATE: f64 = 0.7;

/// Layer factors for the few-shot pre-training variant: the first two
/// layers learn at 0.5 and 0.25 of the base rate.
pub const FEWSHOT_PRETRAIN_FACTORS: [f64; 3] = [0.5, 0.25, 1.0];
/// Init stds for the few-shot pre-training variant: 0.1 for the first
/// layer, 0.5 for the others.
pub const FEWSHOT_PRETRAIN_INIT_STDS: [f64; 3] = [0.1, 0.5, 0.5];

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShotConfig {
    /// Known samples added to each shot batch.
    pub enrichment_count: usize,
    /// The new sample's own output must exceed this.
    pub abs_threshold: f64,
    /// ... and be more than this multiple of the second-highest output.
    pub ratio_threshold: f64,
    /// Step cap per sub-shot so an unconverging shot cannot hang a run.
    pub max_descent_steps: usize,
    pub learning_rate: f64,
    /// Per-layer factors; the default freezes the first layer.
    pub layer_lr_factors: Vec<f64>,
    pub grad_norm: GradNorm,
    pub seed: u64,
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            enrichment_count: 4,
            abs_threshold: 0.3,
            ratio_threshold: 1.5,
            max_descent_steps: 1000,
            learning_rate: DEFAULT_SHOT_LEARNING_RATE,
            layer_lr_factors: vec![0.0, 1.0, 1.0],
            grad_norm: GradNorm::Mean,
            seed: 0,
        }
    }
}

impl ShotConfig {
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if !(self.abs_threshold > 0.0 && self.ratio_threshold > 0.0) {
            return Err(Error::invalid("stop thresholds must be positive"));
        }
        if self.max_descent_steps == 0 {
            return Err(Error::invalid("max_descent_steps must be at least 1"));
        }
        self.step_config(1).validate(n_layers)
    }

    /// The equivalent per-step trainer configuration.
    pub fn step_config(&self, batch_size: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            layer_lr_factors: self.layer_lr_factors.clone(),
            batch_size,
            num_batches: 0,
            clip_lo: crate::network::WEIGHT_LO,
            clip_hi: crate::network::WEIGHT_HI,
            grad_norm: self.grad_norm,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CriteriaMet,
    StepCap,
}

/// Outcome of teaching one new sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubShotRecord {
    pub label: u8,
    pub steps: usize,
    pub reason: StopReason,
    /// Loss on the shot batch before the first and after the last step.
    pub loss_before: f64,
    pub loss_after: f64,
}

/// One shot: both sub-shot outcomes plus the metrics measured afterwards.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShotResult {
    pub shot: usize,
    pub sub_shots: Vec<SubShotRecord>,
    pub metrics: MetricsRow,
}

/// Both criteria on the new sample alone: its own output above the
/// absolute threshold and above `ratio_threshold` times the best other
/// output.
pub fn stop_criteria_met(outputs: &Matrix, label: u8, cfg: &ShotConfig) -> bool {
    let row = outputs.row(0);
    let own = row[label as usize];
    let best_other = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label as usize)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    own > cfg.abs_threshold && own > cfg.ratio_threshold * best_other
}

/// The shot mini-batch: the new sample first, then `enrichment_count`
/// samples drawn uniformly from the enrichment source.
pub fn build_shot_batch(
    new_image: &[f64],
    new_label: u8,
    enrichment_source: &LabeledSet,
    cfg: &ShotConfig,
    rng: &mut SeededRng,
) -> Result<LabeledSet> {
    let mut data = Vec::with_capacity((1 + cfg.enrichment_count) * IMAGE_PIXELS);
    let mut labels = Vec::with_capacity(1 + cfg.enrichment_count);
    data.extend_from_slice(new_image);
    labels.push(new_label);
    if cfg.enrichment_count > 0 {
        if enrichment_source.is_empty() {
            return Err(Error::EmptySet("enrichment source"));
        }
        let batch = enrichment_source.sample_batch(cfg.enrichment_count, rng)?;
        data.extend_from_slice(batch.images().data());
        labels.extend_from_slice(batch.labels());
    }
    LabeledSet::new(
        Matrix::from_vec(labels.len(), IMAGE_PIXELS, data)?,
        labels,
        Split::Train,
    )
}

/// Descend on a fixed batch until the new sample (alone, fresh forward
/// pass each time) meets the stop criteria or the step cap is reached.
/// The criteria are checked before the first step, so an already-learned
/// sample uses zero steps.
fn descend_until_stop(
    mlp: &mut Mlp,
    new_image: &[f64],
    new_label: u8,
    batch_images: &Matrix,
    targets: &Matrix,
    cfg: &ShotConfig,
) -> Result<SubShotRecord> {
    let step_cfg = cfg.step_config(batch_images.rows());
    let batch_loss = |mlp: &Mlp| -> Result<f64> {
        loss(mlp.forward(batch_images.clone())?.outputs(), targets)
    };
    let loss_before = batch_loss(mlp)?;
    let mut steps = 0;
    let reason = loop {
        let out = mlp.forward_single(new_image)?;
        if stop_criteria_met(&out, new_label, cfg) {
            break StopReason::CriteriaMet;
        }
        if steps >= cfg.max_descent_steps {
            break StopReason::StepCap;
        }
        let trace = mlp.forward(batch_images.clone())?;
        let l = loss(trace.outputs(), targets)?;
        if !l.is_finite() {
            return Err(Error::Diverged {
                step: steps as u64,
                loss: l,
            });
        }
        let mut grads = mlp.backward(&trace, targets)?;
        if cfg.grad_norm == GradNorm::Mean {
            grads.scale_in_place(1.0 / batch_images.rows() as f64);
        }
        sgd_step(mlp, &grads, &step_cfg)?;
        steps += 1;
    };
    let loss_after = if steps > 0 { batch_loss(mlp)? } else { loss_before };
    if steps > 0 && loss_after >= loss_before {
        log::warn!(
            "sub-shot for digit {new_label} did not reduce batch loss \
             ({loss_before:.6} -> {loss_after:.6} in {steps} steps)"
        );
    }
    Ok(SubShotRecord {
        label: new_label,
        steps,
        reason,
        loss_before,
        loss_after,
    })
}

/// Teach one new sample: build the enriched batch, then descend.
pub fn run_sub_shot(
    mlp: &mut Mlp,
    new_image: &[f64],
    new_label: u8,
    enrichment_source: &LabeledSet,
    cfg: &ShotConfig,
    rng: &mut SeededRng,
) -> Result<SubShotRecord> {
    cfg.validate(mlp.weights.len())?;
    let batch = build_shot_batch(new_image, new_label, enrichment_source, cfg, rng)?;
    let targets = one_hot_batch(batch.labels())?;
    let (images, _) = batch.into_parts();
    descend_until_stop(mlp, new_image, new_label, &images, &targets, cfg)
}

/// One shot teaches one sample of each novel digit, lower digit first,
/// each sub-shot with freshly drawn enrichment.
pub fn run_shot(
    mlp: &mut Mlp,
    sample_a: (&[f64], u8),
    sample_b: (&[f64], u8),
    enrichment_source: &LabeledSet,
    cfg: &ShotConfig,
    rng: &mut SeededRng,
) -> Result<Vec<SubShotRecord>> {
    if sample_a.1 == sample_b.1 {
        return Err(Error::invalid(format!(
            "shot needs two distinct digits, got {} twice",
            sample_a.1
        )));
    }
    let (first, second) = if sample_a.1 < sample_b.1 {
        (sample_a, sample_b)
    } else {
        (sample_b, sample_a)
    };
    Ok(vec![
        run_sub_shot(mlp, first.0, first.1, enrichment_source, cfg, rng)?,
        run_sub_shot(mlp, second.0, second.1, enrichment_source, cfg, rng)?,
    ])
}

/// A full session: `n_shots` shots with fresh novel samples (each used at
/// most once), metrics after every shot. The shot and evaluation rng
/// streams are both derived from `cfg.seed`, so a session is reproducible
/// from its configuration alone.
#[allow(clippy::too_many_arguments)]
pub fn few_shot_session(
    mlp: &mut Mlp,
    novel_train: &LabeledSet,
    enrichment_source: &LabeledSet,
    cfg: &ShotConfig,
    n_shots: usize,
    test_set: &LabeledSet,
    partition: &DigitPartition,
    n_eval: usize,
) -> Result<Vec<ShotResult>> {
    cfg.validate(mlp.weights.len())?;
    let novel = partition.novel_digits();
    if novel.len() != 2 {
        return Err(Error::invalid(format!(
            "a session teaches exactly 2 novel digits, partition has {}",
            novel.len()
        )));
    }
    let (digit_a, digit_b) = (novel[0], novel[1]);
    let mut idx_a = novel_train.indices_of_digits(&[digit_a]);
    let mut idx_b = novel_train.indices_of_digits(&[digit_b]);
    for (digit, idx) in [(digit_a, &idx_a), (digit_b, &idx_b)] {
        if idx.len() < n_shots {
            return Err(Error::NotEnoughSamples {
                digit,
                needed: n_shots,
                available: idx.len(),
            });
        }
    }
    let evaluator = Evaluator::new(test_set, partition, n_eval)?;
    let mut shot_rng = SeededRng::new(shot_seed(cfg.seed));
    let mut eval_rng = SeededRng::new(eval_seed(cfg.seed));
    shot_rng.shuffle(&mut idx_a);
    shot_rng.shuffle(&mut idx_b);

    let mut results = Vec::with_capacity(n_shots);
    for shot in 1..=n_shots {
        let sample_a = (novel_train.image(idx_a[shot - 1]), digit_a);
        let sample_b = (novel_train.image(idx_b[shot - 1]), digit_b);
        let sub_shots = run_shot(mlp, sample_a, sample_b, enrichment_source, cfg, &mut shot_rng)?;
        let metrics = evaluator.metrics(mlp, shot, &mut eval_rng)?;
        log::info!(
            "shot {shot}: old {:.3} new {:.3} only-new {:.3} overall {:.3} ({} + {} steps)",
            metrics.acc_old,
            metrics.acc_new,
            metrics.acc_only_new,
            metrics.acc_overall,
            sub_shots[0].steps,
            sub_shots[1].steps
        );
        results.push(ShotResult {
            shot,
            sub_shots,
            metrics,
        });
    }
    Ok(results)
}

/// FIFO ring of the most recently used samples.
#[derive(Debug, Clone)]
pub struct RecentBuffer {
    cap: usize,
    items: VecDeque<(Vec<f64>, u8)>,
}

impl RecentBuffer {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            items: VecDeque::with_capacity(cap.max(1)),
        }
    }

    pub fn push(&mut self, image: &[f64], label: u8) {
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back((image.to_vec(), label));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.cap
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u8)> {
        self.items.iter().map(|(img, l)| (img.as_slice(), *l))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FewshotPretrainConfig {
    pub shot: ShotConfig,
    pub buffer_cap: usize,
    pub n_shots: u64,
}

impl Default for FewshotPretrainConfig {
    fn default() -> Self {
        Self {
            shot: ShotConfig {
                enrichment_count: 4,
                layer_lr_factors: FEWSHOT_PRETRAIN_FACTORS.to_vec(),
                ..ShotConfig::default()
            },
            buffer_cap: 4,
            n_shots: 5000,
        }
    }
}

/// Pre-train with the shot procedure itself: each shot takes one new sample
/// drawn uniformly from the stream and enriches it with the last
/// `buffer_cap` used samples. The first `buffer_cap` draws only seed the
/// buffer, with no descent.
pub fn fewshot_pretrain(
    mlp: &mut Mlp,
    stream: &LabeledSet,
    eval_set: Option<&LabeledSet>,
    cfg: &FewshotPretrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainReport> {
    cfg.shot.validate(mlp.weights.len())?;
    if stream.is_empty() {
        return Err(Error::EmptySet("few-shot pre-training stream"));
    }
    let start = std::time::Instant::now();
    let mut buffer = RecentBuffer::new(cfg.buffer_cap);
    for _ in 0..cfg.buffer_cap {
        let seed_sample = stream.sample_batch(1, rng)?;
        buffer.push(seed_sample.image(0), seed_sample.label(0));
    }
    let mut history = Vec::new();
    for shot in 0..cfg.n_shots {
        let new = stream.sample_batch(1, rng)?;
        let (new_image, new_label) = (new.image(0).to_vec(), new.label(0));

        let rows = 1 + buffer.len();
        let mut data = Vec::with_capacity(rows * IMAGE_PIXELS);
        let mut labels = Vec::with_capacity(rows);
        data.extend_from_slice(&new_image);
        labels.push(new_label);
        for (img, l) in buffer.iter() {
            data.extend_from_slice(img);
            labels.push(l);
        }
        let batch_images = Matrix::from_vec(rows, IMAGE_PIXELS, data)?;
        let targets = one_hot_batch(&labels)?;

        let record = descend_until_stop(
            mlp,
            &new_image,
            new_label,
            &batch_images,
            &targets,
            &cfg.shot,
        )?;
        if shot % 100 == 0 || shot + 1 == cfg.n_shots {
            history.push(LossSample {
                batch: shot,
                loss: record.loss_after,
            });
        }
        if shot % 500 == 0 {
            log::info!(
                "few-shot pretrain shot {shot}/{}: loss {:.4}, {} steps",
                cfg.n_shots,
                record.loss_after,
                record.steps
            );
        }
        buffer.push(&new_image, new_label);
    }
    let final_accuracy = match eval_set {
        Some(set) => {
            let mut eval_rng = SeededRng::new(eval_seed(cfg.shot.seed));
            Some(crate::eval::subset_accuracy(
                mlp,
                set,
                crate::eval::DEFAULT_N_EVAL,
                &mut eval_rng,
            )?)
        }
        None => None,
    };
    Ok(TrainReport {
        history,
        final_accuracy,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config: ConfigEcho::FewshotPretrain(cfg.clone()),
        seed: cfg.shot.seed,
    })
}
