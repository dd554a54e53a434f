//! Accuracy metrics and the argmax prediction rule.
//!
//! Four accuracies are tracked per shot: old digits (full argmax over the
//! pre-training digits' test samples), new digits (full argmax over the
//! novel digits' samples), only-new (argmax restricted to the novel
//! outputs, same samples as `acc_new`), and overall (full argmax over a
//! mix of all ten digits).

use crate::dataset::{DigitPartition, LabeledSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::Mlp;
use crate::rng::SeededRng;

/// Default number of evaluation samples per metric.
pub const DEFAULT_N_EVAL: usize = 1000;

/// One row of the per-shot metrics table. Shot 0 denotes the state before
/// any shot.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRow {
    pub shot: usize,
    pub acc_old: f64,
    pub acc_new: f64,
    pub acc_only_new: f64,
    pub acc_overall: f64,
    pub n_eval: usize,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "shot,acc_old,acc_new,acc_only_new,acc_overall";

    /// Fixed four-decimal formatting so identical runs emit identical
    /// bytes.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.4},{:.4}",
            self.shot, self.acc_old, self.acc_new, self.acc_only_new, self.acc_overall
        )
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax over `allowed` indices only.
pub fn argmax_restricted(row: &[f64], allowed: &[u8]) -> Result<u8> {
    let mut best: Option<u8> = None;
    for &d in allowed {
        let candidate = row
            .get(d as usize)
            .ok_or_else(|| Error::invalid(format!("digit {d} outside output range")))?;
        match best {
            Some(b) if *candidate <= row[b as usize] => {}
            _ => best = Some(d),
        }
    }
    best.ok_or(Error::EmptySet("allowed digits"))
}

/// Predicted digit for one scaled image: full argmax over all 10 outputs.
pub fn predict(mlp: &Mlp, image: &[f64]) -> Result<u8> {
    let out = mlp.forward_single(image)?;
    Ok(argmax(out.row(0)) as u8)
}

/// Predicted digit with candidates restricted to `allowed`.
pub fn predict_restricted(mlp: &Mlp, image: &[f64], allowed: &[u8]) -> Result<u8> {
    let out = mlp.forward_single(image)?;
    argmax_restricted(out.row(0), allowed)
}

/// Batched predictions, one digit per input row.
pub fn predict_batch(mlp: &Mlp, images: Matrix) -> Result<Vec<u8>> {
    let trace = mlp.forward(images)?;
    Ok(trace
        .outputs()
        .row_iter()
        .map(|row| argmax(row) as u8)
        .collect())
}

/// Full-argmax accuracy on up to `n_eval` samples drawn uniformly from the
/// whole set (the whole set if it is smaller).
pub fn subset_accuracy(
    mlp: &Mlp,
    set: &LabeledSet,
    n_eval: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet("evaluation set"));
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let picks = draw_indices(&all, n_eval, rng);
    let sample = set.subset(&picks);
    let (images, labels) = sample.into_parts();
    let preds = predict_batch(mlp, images)?;
    Ok(fraction_equal(&preds, &labels))
}

/// Pre-resolved evaluation plan for one test set and digit partition:
/// the old/new index lists are computed once, then each `metrics` call
/// draws its subsamples and runs batched forward passes.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    test: &'a LabeledSet,
    old_indices: Vec<usize>,
    new_indices: Vec<usize>,
    novel: Vec<u8>,
    n_eval: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(test: &'a LabeledSet, partition: &DigitPartition, n_eval: usize) -> Result<Self> {
        if n_eval == 0 {
            return Err(Error::invalid("n_eval must be at least 1"));
        }
        let old_indices = test.indices_of_digits(partition.pretrain_digits());
        let new_indices = test.indices_of_digits(partition.novel_digits());
        if old_indices.is_empty() {
            return Err(Error::EmptySet("no pre-training digits in the test set"));
        }
        if new_indices.is_empty() {
            return Err(Error::EmptySet("no novel digits in the test set"));
        }
        Ok(Self {
            test,
            old_indices,
            new_indices,
            novel: partition.novel_digits().to_vec(),
            n_eval,
        })
    }

    /// Compute all four accuracies. Subsamples are drawn in a fixed order
    /// (old, novel, overall); `acc_new` and `acc_only_new` share the same
    /// novel subsample and the same forward pass, so the only-new accuracy
    /// can never fall below the new accuracy.
    pub fn metrics(&self, mlp: &Mlp, shot: usize, rng: &mut SeededRng) -> Result<MetricsRow> {
        let old_picks = draw_indices(&self.old_indices, self.n_eval, rng);
        let new_picks = draw_indices(&self.new_indices, self.n_eval, rng);
        let all: Vec<usize> = (0..self.test.len()).collect();
        let overall_picks = draw_indices(&all, self.n_eval, rng);

        let (old_images, old_labels) = self.test.subset(&old_picks).into_parts();
        let acc_old = fraction_equal(&predict_batch(mlp, old_images)?, &old_labels);

        let (new_images, new_labels) = self.test.subset(&new_picks).into_parts();
        let trace = mlp.forward(new_images)?;
        let mut full_hits = 0usize;
        let mut restricted_hits = 0usize;
        for (row, &label) in trace.outputs().row_iter().zip(&new_labels) {
            if argmax(row) as u8 == label {
                full_hits += 1;
            }
            if argmax_restricted(row, &self.novel)? == label {
                restricted_hits += 1;
            }
        }
        let acc_new = full_hits as f64 / new_labels.len() as f64;
        let acc_only_new = restricted_hits as f64 / new_labels.len() as f64;

        let (all_images, all_labels) = self.test.subset(&overall_picks).into_parts();
        let acc_overall = fraction_equal(&predict_batch(mlp, all_images)?, &all_labels);

        Ok(MetricsRow {
            shot,
            acc_old,
            acc_new,
            acc_only_new,
            acc_overall,
            n_eval: self.n_eval,
        })
    }
}

/// One-off metrics computation; sessions that evaluate repeatedly should
/// hold an [`Evaluator`] instead.
pub fn compute_metrics(
    mlp: &Mlp,
    test_set: &LabeledSet,
    partition: &DigitPartition,
    n_eval: usize,
    rng: &mut SeededRng,
) -> Result<MetricsRow> {
    Evaluator::new(test_set, partition, n_eval)?.metrics(mlp, 0, rng)
}

/// Up to `n` distinct indices drawn uniformly from `pool`; the whole pool
/// (in order) if it has no more than `n` entries.
fn draw_indices(pool: &[usize], n: usize, rng: &mut SeededRng) -> Vec<usize> {
    if pool.len() <= n {
        return pool.to_vec();
    }
    let mut shuffled = pool.to_vec();
    rng.shuffle(&mut shuffled);
    shuffled.truncate(n);
    shuffled
}

fn fraction_equal(preds: &[u8], labels: &[u8]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Split, IMAGE_PIXELS};
    use crate::network::ActivationSpec;

    /// Set where sample of digit d has pixel d lit; paired with
    /// `diagonal_net` this is classified perfectly.
    fn marker_set(labels: &[u8]) -> LabeledSet {
        let n = labels.len();
        let mut data = vec![0.0; n * IMAGE_PIXELS];
        for (i, &l) in labels.iter().enumerate() {
            data[i * IMAGE_PIXELS + l as usize] = 1.0;
        }
        LabeledSet::new(
            Matrix::from_vec(n, IMAGE_PIXELS, data).unwrap(),
            labels.to_vec(),
            Split::Test,
        )
        .unwrap()
    }

    /// Hand-built network that routes pixel d to output d: every layer is
    /// a (partial) identity, so the lit pixel stays the strongest signal.
    fn diagonal_net() -> Mlp {
        let mut w1 = Matrix::zeros(784, 64);
        let mut w2 = Matrix::zeros(64, 64);
        let mut w3 = Matrix::zeros(64, 10);
        for d in 0..10 {
            w1.set(d, d, 1.0);
            w3.set(d, d, 1.0);
        }
        for d in 0..64 {
            w2.set(d, d, 1.0);
        }
        Mlp {
            weights: vec![w1, w2, w3],
            activation: ActivationSpec::default(),
        }
    }

    fn zero_net() -> Mlp {
        Mlp {
            weights: vec![
                Matrix::zeros(784, 64),
                Matrix::zeros(64, 64),
                Matrix::zeros(64, 10),
            ],
            activation: ActivationSpec::default(),
        }
    }

    fn balanced_labels(per_digit: usize) -> Vec<u8> {
        (0..10u8)
            .flat_map(|d| std::iter::repeat_n(d, per_digit))
            .collect()
    }

    #[test]
    fn argmax_picks_largest() {
        let mut row = [0.0; 10];
        row[5] = 0.9;
        assert_eq!(argmax(&row), 5);
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let mut row = [0.1; 10];
        row[2] = 0.4;
        row[8] = 0.4;
        assert_eq!(argmax(&row), 2);
        assert_eq!(argmax(&[0.3; 10]), 0);
    }

    #[test]
    fn argmax_matches_linear_scan() {
        let mut rng = SeededRng::new(17);
        for _ in 0..200 {
            let row: Vec<f64> = (0..10).map(|_| rng.uniform(0.0, 1.0)).collect();
            let mut best = 0;
            for i in 1..10 {
                if row[i] > row[best] {
                    best = i;
                }
            }
            assert_eq!(argmax(&row), best);
        }
    }

    #[test]
    fn argmax_is_scale_invariant() {
        let mut rng = SeededRng::new(18);
        for _ in 0..100 {
            let row: Vec<f64> = (0..10).map(|_| rng.uniform(0.0, 1.0)).collect();
            let c = rng.uniform(0.1, 50.0);
            let scaled: Vec<f64> = row.iter().map(|v| v * c).collect();
            assert_eq!(argmax(&row), argmax(&scaled));
            assert_eq!(
                argmax_restricted(&row, &[2, 8]).unwrap(),
                argmax_restricted(&scaled, &[2, 8]).unwrap()
            );
        }
    }

    #[test]
    fn restricted_argmax_basics() {
        let mut row = [0.0; 10];
        row[2] = 0.1;
        row[8] = 0.2;
        assert_eq!(argmax_restricted(&row, &[2, 8]).unwrap(), 8);
        assert_eq!(argmax_restricted(&row, &[7]).unwrap(), 7);
        assert!(argmax_restricted(&row, &[]).is_err());
        assert!(argmax_restricted(&row, &[10]).is_err());
    }

    #[test]
    fn restricted_ties_go_to_first_listed() {
        let row = [0.5; 10];
        assert_eq!(argmax_restricted(&row, &[2, 8]).unwrap(), 2);
    }

    #[test]
    fn restricted_agrees_with_full_when_winner_allowed() {
        let mut rng = SeededRng::new(19);
        let allowed: Vec<u8> = (0..10).collect();
        for _ in 0..100 {
            let row: Vec<f64> = (0..10).map(|_| rng.uniform(0.0, 1.0)).collect();
            assert_eq!(
                argmax_restricted(&row, &allowed).unwrap(),
                argmax(&row) as u8
            );
        }
    }

    #[test]
    fn perfect_model_scores_one_everywhere() {
        let set = marker_set(&balanced_labels(6));
        let net = diagonal_net();
        let mut rng = SeededRng::new(20);
        let row =
            compute_metrics(&net, &set, &DigitPartition::default(), 1000, &mut rng).unwrap();
        assert_eq!(row.acc_old, 1.0);
        assert_eq!(row.acc_new, 1.0);
        assert_eq!(row.acc_only_new, 1.0);
        assert_eq!(row.acc_overall, 1.0);
    }

    #[test]
    fn constant_model_scores_chance_level() {
        // All outputs tie, so prediction is always digit 0 and the
        // restricted prediction always the first novel digit.
        let set = marker_set(&balanced_labels(20));
        let net = zero_net();
        let mut rng = SeededRng::new(21);
        let row =
            compute_metrics(&net, &set, &DigitPartition::default(), 1000, &mut rng).unwrap();
        assert_eq!(row.acc_overall, 0.1);
        assert_eq!(row.acc_only_new, 0.5);
        assert_eq!(row.acc_new, 0.0);
        assert_eq!(row.acc_old, 0.125);
    }

    #[test]
    fn metrics_are_deterministic_given_seed() {
        let set = marker_set(&balanced_labels(30));
        let net = diagonal_net();
        let p = DigitPartition::default();
        let a = compute_metrics(&net, &set, &p, 50, &mut SeededRng::new(5)).unwrap();
        let b = compute_metrics(&net, &set, &p, 50, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn only_new_never_below_new() {
        // Random-ish weights, no training: the invariant is structural
        // because both accuracies come from the same outputs.
        let mut rng = SeededRng::new(22);
        let net = Mlp::default_sized(&mut rng);
        let set = marker_set(&balanced_labels(15));
        for seed in 0..5 {
            let row = compute_metrics(
                &net,
                &set,
                &DigitPartition::default(),
                40,
                &mut SeededRng::new(seed),
            )
            .unwrap();
            assert!(row.acc_only_new >= row.acc_new);
        }
    }

    #[test]
    fn subset_accuracy_on_perfect_model() {
        let set = marker_set(&balanced_labels(3));
        let net = diagonal_net();
        let mut rng = SeededRng::new(23);
        assert_eq!(subset_accuracy(&net, &set, 1000, &mut rng).unwrap(), 1.0);
    }

    #[test]
    fn evaluator_rejects_missing_subsets() {
        let set = marker_set(&[0, 1, 3]);
        assert!(Evaluator::new(&set, &DigitPartition::default(), 10).is_err());
        let only_novel = marker_set(&[2, 8]);
        assert!(Evaluator::new(&only_novel, &DigitPartition::default(), 10).is_err());
    }

    #[test]
    fn csv_line_formats_four_decimals() {
        let row = MetricsRow {
            shot: 3,
            acc_old: 0.95,
            acc_new: 0.5210000001,
            acc_only_new: 0.6670001,
            acc_overall: 0.87,
            n_eval: 1000,
        };
        assert_eq!(row.csv_line(), "3,0.9500,0.5210,0.6670,0.8700");
        assert_eq!(MetricsRow::CSV_HEADER, "shot,acc_old,acc_new,acc_only_new,acc_overall");
    }

    #[test]
    fn draw_indices_small_pool_returns_all() {
        let pool = vec![4, 9, 1];
        let mut rng = SeededRng::new(2);
        assert_eq!(draw_indices(&pool, 10, &mut rng), pool);
        let picked = draw_indices(&pool, 2, &mut rng);
        assert_eq!(picked.len(), 2);
        assert!(picked.iter().all(|i| pool.contains(i)));
        assert_ne!(picked[0], picked[1]);
    }
}
