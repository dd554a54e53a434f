//! `fewnist gradcheck`: verify the analytic backward pass against central
//! finite differences on a population of random small networks, and verify
//! that the check itself would catch a broken gradient by injecting a
//! sign-flip and expecting a loud failure.

use anyhow::{bail, Context, Result};
use fewnist::network::Grads;
use fewnist::{ActivationSpec, Matrix, Mlp, SeededRng};
use serde::{Deserialize, Serialize};

use crate::commands::RunCtx;
use crate::config::ExperimentConfig;

pub const RESULT_FILE: &str = "gradcheck.json";

pub const N_NETS: usize = 100;
pub const EPS: f64 = 1e-5;
pub const THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub n_nets: usize,
    pub eps: f64,
    pub threshold: f64,
    pub max_rel_error: f64,
    /// Shape of the network that produced the max error.
    pub worst_shapes: Vec<(usize, usize)>,
    /// The same check run with a sign-flipped first-layer gradient must
    /// fail, proving the oracle can catch a real bug.
    pub injected_bug_caught: bool,
    pub pass: bool,
}

pub fn run(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<()> {
    let result = check(cfg.seed)?;
    let text = serde_json::to_string_pretty(&result).context("serializing gradcheck result")?;
    std::fs::write(cfg.out_dir.join(RESULT_FILE), text)?;
    ctx.record(RESULT_FILE);

    println!(
        "gradcheck: max relative error {:.3e} over {} random nets (threshold {:.0e})",
        result.max_rel_error, result.n_nets, result.threshold
    );
    println!(
        "gradcheck: injected sign-flip {}",
        if result.injected_bug_caught {
            "caught"
        } else {
            "NOT caught"
        }
    );
    if !result.pass {
        bail!(
            "gradient check failed: max relative error {:.3e}, injected bug caught: {}",
            result.max_rel_error,
            result.injected_bug_caught
        );
    }
    println!("gradcheck: pass");
    Ok(())
}

pub fn check(seed: u64) -> Result<GradcheckResult> {
    let mut rng = SeededRng::new(seed);
    let mut max_rel_error = 0.0f64;
    let mut worst_shapes = Vec::new();
    let mut last: Option<(Mlp, Matrix, Matrix)> = None;

    for _ in 0..N_NETS {
        let (net, batch, targets) = random_case(&mut rng)?;
        let analytic = net.backward(&net.forward(batch.clone())?, &targets)?;
        let numeric = net.numerical_grad(&batch, &targets, EPS)?;
        let rel = max_rel(&analytic, &numeric);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_shapes = net.shapes();
        }
        last = Some((net, batch, targets));
    }

    // Mutation check on the last case: negate the first layer's analytic
    // gradient and require the comparison to blow past the threshold.
    let (net, batch, targets) = last.expect("N_NETS > 0");
    let mut flipped = net.backward(&net.forward(batch.clone())?, &targets)?;
    for v in flipped.layers[0].data_mut() {
        *v = -*v;
    }
    let numeric = net.numerical_grad(&batch, &targets, EPS)?;
    let injected_bug_caught = max_rel(&flipped, &numeric) > THRESHOLD;

    Ok(GradcheckResult {
        n_nets: N_NETS,
        eps: EPS,
        threshold: THRESHOLD,
        max_rel_error,
        worst_shapes,
        injected_bug_caught,
        pass: max_rel_error <= THRESHOLD && injected_bug_caught,
    })
}

/// A random 2-3 layer network with small random dimensions, a random batch
/// and random one-hot targets. Weights use a wide init so the activation is
/// exercised away from its midpoint.
fn random_case(rng: &mut SeededRng) -> Result<(Mlp, Matrix, Matrix)> {
    let n_layers = 2 + rng.index(2);
    let mut dims = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        dims.push(2 + rng.index(6));
    }
    let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
    let stds = vec![0.6; n_layers];
    let net = Mlp::init(&shapes, &stds, ActivationSpec::default(), rng)?;

    let rows = 1 + rng.index(4);
    let mut batch = Matrix::zeros(rows, dims[0]);
    for v in batch.data_mut() {
        *v = rng.uniform(0.0, 1.0);
    }
    let mut targets = Matrix::zeros(rows, *dims.last().expect("nonempty"));
    for i in 0..rows {
        let hot = rng.index(targets.cols());
        targets.set(i, hot, 1.0);
    }
    Ok((net, batch, targets))
}

/// rel(a, n) with a floor so near-zero pairs compare as equal instead of
/// dividing noise by noise.
fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

fn max_rel(a: &Grads, b: &Grads) -> f64 {
    let mut worst = 0.0f64;
    for (ga, gb) in a.layers.iter().zip(&b.layers) {
        for (&va, &vb) in ga.data().iter().zip(gb.data()) {
            worst = worst.max(rel_error(va, vb));
        }
    }
    worst
}
