//! Plain SGD with per-layer learning-rate factors, weight clipping after
//! every step, and the batch pre-training loop.
//!
//! A layer factor of 0 freezes that layer exactly: the update is skipped
//! outright so the weights stay bitwise identical, not merely close.

use std::time::Instant;

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::eval;
use crate::network::{loss, one_hot_batch, Grads, Mlp};
use crate::rng::{eval_seed, SeededRng};

/// Default learning rate, selected by the recorded sweep in
/// `baselines/lr_sweep.json` (mean-normalized gradients; see [`GradNorm`]).
pub const DEFAULT_LEARNING_RATE: f64 = 1.0;

/// Batch loss is recorded every this many batches (plus the final batch).
pub const LOSS_SAMPLE_EVERY: u64 = 100;

/// How batch gradients are normalized before the update. `Mean` divides by
/// the batch size so one learning rate behaves the same for 5-sample shot
/// batches and 1000-sample pre-training batches; `Sum` applies the raw
/// summed gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradNorm {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// One multiplier per weight layer; 0 freezes the layer.
    pub layer_lr_factors: Vec<f64>,
    pub batch_size: usize,
    pub num_batches: u64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub grad_norm: GradNorm,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale regimen: 10000 batches of 250. The full-scale regimen
    /// (100000 batches of 1000) is available via [`TrainConfig::paper_scale`].
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            layer_lr_factors: vec![1.0, 1.0, 1.0],
            batch_size: 250,
            num_batches: 10_000,
            clip_lo: -1.0,
            clip_hi: 1.0,
            grad_norm: GradNorm::Mean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn paper_scale() -> Self {
        Self {
            batch_size: 1000,
            num_batches: 100_000,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.layer_lr_factors.len() != n_layers {
            return Err(Error::invalid(format!(
                "{} layer factors for {} layers",
                self.layer_lr_factors.len(),
                n_layers
            )));
        }
        if self.layer_lr_factors.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::invalid("layer factors must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.clip_lo > self.clip_hi {
            return Err(Error::invalid("clip_lo must not exceed clip_hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossSample {
    pub batch: u64,
    pub loss: f64,
}

/// Which configuration produced a report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigEcho {
    Pretrain(TrainConfig),
    FewshotPretrain(crate::fewshot::FewshotPretrainConfig),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub history: Vec<LossSample>,
    /// Accuracy on the evaluation set, when one was supplied.
    pub final_accuracy: Option<f64>,
    pub wall_clock_secs: f64,
    pub config: ConfigEcho,
    pub seed: u64,
}

/// One update: `w_l <- clip(w_l - lr * factor_l * g_l)`. Layers with
/// factor 0 are skipped entirely so they stay bitwise unchanged.
pub fn sgd_step(mlp: &mut Mlp, grads: &Grads, cfg: &TrainConfig) -> Result<()> {
    cfg.validate(mlp.weights.len())?;
    if grads.layers.len() != mlp.weights.len() {
        return Err(Error::invalid(format!(
            "{} gradient layers for {} weight layers",
            grads.layers.len(),
            mlp.weights.len()
        )));
    }
    for (layer, (w, g)) in mlp.weights.iter_mut().zip(&grads.layers).enumerate() {
        let factor = cfg.layer_lr_factors[layer];
        if factor == 0.0 {
            continue;
        }
        w.axpy_in_place(-cfg.learning_rate * factor, g)?;
        w.clip_in_place(cfg.clip_lo, cfg.clip_hi)?;
    }
    Ok(())
}

/// The pre-training loop: `num_batches` iterations of sample, forward,
/// backward, update. Batches are drawn from `rng`; the final-accuracy
/// subsample uses a stream derived from `cfg.seed` so it does not disturb
/// the training draw sequence.
pub fn pretrain(
    mlp: &mut Mlp,
    train: &LabeledSet,
    eval_set: Option<&LabeledSet>,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainReport> {
    cfg.validate(mlp.weights.len())?;
    if train.is_empty() {
        return Err(Error::EmptySet("pre-training set"));
    }
    let start = Instant::now();
    let mut history = Vec::new();
    for b in 0..cfg.num_batches {
        let (images, labels) = train.sample_batch(cfg.batch_size, rng)?.into_parts();
        let targets = one_hot_batch(&labels)?;
        let trace = mlp.forward(images)?;
        let batch_loss = loss(trace.outputs(), &targets)?;
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                step: b,
                loss: batch_loss,
            });
        }
        if b % LOSS_SAMPLE_EVERY == 0 || b + 1 == cfg.num_batches {
            history.push(LossSample {
                batch: b,
                loss: batch_loss,
            });
        }
        if b % 1000 == 0 {
            log::info!("batch {b}/{}: loss {batch_loss:.4}", cfg.num_batches);
        }
        let mut grads = mlp.backward(&trace, &targets)?;
        if cfg.grad_norm == GradNorm::Mean {
            grads.scale_in_place(1.0 / cfg.batch_size as f64);
        }
        sgd_step(mlp, &grads, cfg)?;
    }
    let final_accuracy = match eval_set {
        Some(set) => {
            let mut eval_rng = SeededRng::new(eval_seed(cfg.seed));
            Some(eval::subset_accuracy(
                mlp,
                set,
                eval::DEFAULT_N_EVAL,
                &mut eval_rng,
            )?)
        }
        None => None,
    };
    Ok(TrainReport {
        history,
        final_accuracy,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config: ConfigEcho::Pretrain(cfg.clone()),
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSweepEntry {
    pub learning_rate: f64,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSweep {
    pub entries: Vec<LrSweepEntry>,
    pub winner: f64,
}

/// Train one fresh default-sized network per candidate rate and pick the
/// one with the best evaluation accuracy (first one wins ties). Every
/// candidate starts from an identical init because the rng is re-seeded
/// per rate.
pub fn run_lr_sweep(
    train: &LabeledSet,
    eval_set: &LabeledSet,
    rates: &[f64],
    base: &TrainConfig,
) -> Result<LrSweep> {
    if rates.is_empty() {
        return Err(Error::invalid("sweep needs at least one rate"));
    }
    let mut entries = Vec::with_capacity(rates.len());
    for &rate in rates {
        let cfg = TrainConfig {
            learning_rate: rate,
            ..base.clone()
        };
        let mut rng = SeededRng::new(crate::rng::train_seed(cfg.seed));
        let mut mlp = Mlp::default_sized(&mut rng);
        match pretrain(&mut mlp, train, Some(eval_set), &cfg, &mut rng) {
            Ok(report) => entries.push(LrSweepEntry {
                learning_rate: rate,
                final_accuracy: report.final_accuracy,
                final_loss: report.history.last().map(|s| s.loss),
                diverged: false,
            }),
            Err(Error::Diverged { .. }) => entries.push(LrSweepEntry {
                learning_rate: rate,
                final_accuracy: None,
                final_loss: None,
                diverged: true,
            }),
            Err(other) => return Err(other),
        }
    }
    let winner = entries
        .iter()
        .max_by(|a, b| {
            let av = a.final_accuracy.unwrap_or(f64::NEG_INFINITY);
            let bv = b.final_accuracy.unwrap_or(f64::NEG_INFINITY);
            av.partial_cmp(&bv).expect("accuracies are not NaN")
        })
        .expect("entries nonempty")
        .learning_rate;
    Ok(LrSweep { entries, winner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{self, SynthConfig};
    use crate::dataset::DigitPartition;
    use crate::linalg::Matrix;
    use crate::network::ActivationSpec;

    fn small_net(seed: u64) -> Mlp {
        let mut rng = SeededRng::new(seed);
        Mlp::init(
            &[(6, 4), (4, 4), (4, 3)],
            &[0.3, 0.3, 0.3],
            ActivationSpec::default(),
            &mut rng,
        )
        .unwrap()
    }

    fn random_grads(mlp: &Mlp, seed: u64) -> Grads {
        let mut rng = SeededRng::new(seed);
        let layers = mlp
            .weights
            .iter()
            .map(|w| {
                let mut g = Matrix::zeros(w.rows(), w.cols());
                for v in g.data_mut() {
                    *v = rng.uniform(-1.0, 1.0);
                }
                g
            })
            .collect();
        Grads { layers }
    }

    fn cfg_for(mlp: &Mlp) -> TrainConfig {
        TrainConfig {
            layer_lr_factors: vec![1.0; mlp.weights.len()],
            ..TrainConfig::default()
        }
    }

    fn weight_bits(mlp: &Mlp) -> Vec<Vec<u64>> {
        mlp.weights
            .iter()
            .map(|w| w.data().iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    fn synth_digit_sets(per_digit: usize, seed: u64) -> (LabeledSet, LabeledSet) {
        let cfg = SynthConfig {
            train_per_digit: per_digit,
            test_per_digit: per_digit / 2 + 1,
            seed,
            ..SynthConfig::default()
        };
        synth::labeled_sets(&cfg).unwrap()
    }

    #[test]
    fn zero_gradients_leave_weights_unchanged() {
        let mut net = small_net(1);
        let before = net.clone();
        let cfg = cfg_for(&net);
        let grads = Grads {
            layers: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        };
        sgd_step(&mut net, &grads, &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn factor_zero_freezes_layer_bitwise() {
        let mut net = small_net(2);
        let before = weight_bits(&net);
        let grads = random_grads(&net, 3);
        let cfg = TrainConfig {
            layer_lr_factors: vec![0.0, 1.0, 1.0],
            ..cfg_for(&net)
        };
        for _ in 0..5 {
            sgd_step(&mut net, &grads, &cfg).unwrap();
        }
        assert_eq!(weight_bits(&net)[0], before[0]);
        assert_ne!(weight_bits(&net)[1], before[1]);
        assert_ne!(weight_bits(&net)[2], before[2]);
    }

    #[test]
    fn update_clips_at_the_boundary() {
        let mut net = Mlp {
            weights: vec![Matrix::from_vec(1, 1, vec![0.999]).unwrap()],
            activation: ActivationSpec::default(),
        };
        let grads = Grads {
            layers: vec![Matrix::from_vec(1, 1, vec![-0.01]).unwrap()],
        };
        let cfg = TrainConfig {
            learning_rate: 1.0,
            layer_lr_factors: vec![1.0],
            ..TrainConfig::default()
        };
        sgd_step(&mut net, &grads, &cfg).unwrap();
        assert_eq!(net.weights[0].get(0, 0), 1.0);
    }

    #[test]
    fn weights_stay_bounded_under_aggressive_updates() {
        let mut net = small_net(4);
        let cfg = TrainConfig {
            learning_rate: 1e4,
            layer_lr_factors: vec![1.0; 3],
            ..TrainConfig::default()
        };
        for seed in 0..10 {
            let grads = random_grads(&net, 100 + seed);
            sgd_step(&mut net, &grads, &cfg).unwrap();
            for w in &net.weights {
                assert!(w.max_abs() <= 1.0);
            }
        }
    }

    #[test]
    fn sum_and_mean_normalization_agree_up_to_lr_scaling() {
        let (train, _) = synth_digit_sets(4, 50);
        let batch_size = 8;

        let mut mean_net = Mlp::default_sized(&mut SeededRng::new(9));
        let mean_cfg = TrainConfig {
            learning_rate: 0.8,
            batch_size,
            num_batches: 3,
            grad_norm: GradNorm::Mean,
            ..TrainConfig::default()
        };
        pretrain(&mut mean_net, &train, None, &mean_cfg, &mut SeededRng::new(7)).unwrap();

        let mut sum_net = Mlp::default_sized(&mut SeededRng::new(9));
        let sum_cfg = TrainConfig {
            learning_rate: 0.8 / batch_size as f64,
            grad_norm: GradNorm::Sum,
            ..mean_cfg
        };
        pretrain(&mut sum_net, &train, None, &sum_cfg, &mut SeededRng::new(7)).unwrap();

        for (a, b) in mean_net.weights.iter().zip(&sum_net.weights) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn zero_batches_is_a_no_op() {
        let (train, _) = synth_digit_sets(2, 51);
        let mut net = Mlp::default_sized(&mut SeededRng::new(11));
        let before = weight_bits(&net);
        let cfg = TrainConfig {
            num_batches: 0,
            ..TrainConfig::default()
        };
        let report = pretrain(&mut net, &train, None, &cfg, &mut SeededRng::new(12)).unwrap();
        assert_eq!(weight_bits(&net), before);
        assert!(report.history.is_empty());
    }

    #[test]
    fn pretrain_rejects_empty_set() {
        let (train, _) = synth_digit_sets(2, 52);
        let empty = train.filter_by_digits(&[]);
        let mut net = Mlp::default_sized(&mut SeededRng::new(13));
        let err = pretrain(
            &mut net,
            &empty,
            None,
            &TrainConfig::default(),
            &mut SeededRng::new(14),
        );
        assert!(matches!(err, Err(Error::EmptySet(_))));
    }

    #[test]
    fn pretrain_is_bitwise_deterministic() {
        let (train, _) = synth_digit_sets(6, 53);
        let cfg = TrainConfig {
            batch_size: 16,
            num_batches: 25,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = Mlp::default_sized(&mut SeededRng::new(15));
            pretrain(&mut net, &train, None, &cfg, &mut SeededRng::new(16)).unwrap();
            weight_bits(&net)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_drops_over_the_first_200_batches() {
        let partition = DigitPartition::default();
        let (train, _) = synth_digit_sets(40, 54);
        let old_train = train.filter_by_digits(partition.pretrain_digits());
        let mut net = Mlp::default_sized(&mut SeededRng::new(17));
        let cfg = TrainConfig {
            batch_size: 64,
            num_batches: 200,
            ..TrainConfig::default()
        };
        let report = pretrain(&mut net, &old_train, None, &cfg, &mut SeededRng::new(18)).unwrap();
        let first = report.history.first().unwrap();
        let last = report.history.last().unwrap();
        assert_eq!(first.batch, 0);
        assert_eq!(last.batch, 199);
        assert!(
            last.loss < first.loss,
            "loss did not drop: {} -> {}",
            first.loss,
            last.loss
        );
    }

    #[test]
    fn history_sampling_includes_final_batch() {
        let (train, _) = synth_digit_sets(3, 55);
        let mut net = Mlp::default_sized(&mut SeededRng::new(19));
        let cfg = TrainConfig {
            batch_size: 4,
            num_batches: 150,
            ..TrainConfig::default()
        };
        let report = pretrain(&mut net, &train, None, &cfg, &mut SeededRng::new(20)).unwrap();
        let batches: Vec<u64> = report.history.iter().map(|s| s.batch).collect();
        assert_eq!(batches, vec![0, 100, 149]);
    }

    #[test]
    fn report_serializes_to_json() {
        let (train, test) = synth_digit_sets(3, 56);
        let mut net = Mlp::default_sized(&mut SeededRng::new(21));
        let cfg = TrainConfig {
            batch_size: 4,
            num_batches: 2,
            ..TrainConfig::default()
        };
        let report = pretrain(&mut net, &train, Some(&test), &cfg, &mut SeededRng::new(22)).unwrap();
        assert!(report.final_accuracy.is_some());
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"kind\":\"pretrain\""));
        let back: TrainReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.history, report.history);
    }

    #[test]
    fn lr_sweep_returns_entry_per_rate_and_a_winner() {
        let (train, test) = synth_digit_sets(5, 57);
        let base = TrainConfig {
            batch_size: 8,
            num_batches: 10,
            ..TrainConfig::default()
        };
        let sweep = run_lr_sweep(&train, &test, &[0.1, 1.0], &base).unwrap();
        assert_eq!(sweep.entries.len(), 2);
        assert!(sweep.entries.iter().any(|e| e.learning_rate == sweep.winner));
        assert!(sweep.entries.iter().all(|e| !e.diverged));
        serde_json::to_string_pretty(&sweep).unwrap();
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let net = small_net(30);
        let mut cfg = cfg_for(&net);
        cfg.learning_rate = 0.0;
        assert!(cfg.validate(3).is_err());
        let mut cfg = cfg_for(&net);
        cfg.layer_lr_factors = vec![1.0, -0.5, 1.0];
        assert!(cfg.validate(3).is_err());
        let mut cfg = cfg_for(&net);
        cfg.batch_size = 0;
        assert!(cfg.validate(3).is_err());
        let mut cfg = cfg_for(&net);
        cfg.layer_lr_factors = vec![1.0];
        assert!(cfg.validate(3).is_err());
        assert!(cfg_for(&net).validate(3).is_ok());
    }
}
