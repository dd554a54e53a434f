//! Regenerates the recorded baseline files in `baselines/`.
//!
//! Run it from the repository root:
//!
//! ```text
//! cargo run --release -p fewnist --example baselines
//! ```
//!
//! Every run is seeded, so the emitted values only change when the training
//! code or the corpus generator changes. Elapsed times are left out on
//! purpose so reruns stay byte-identical.

use std::fs;
use std::path::Path;

use fewnist::dataset::synth::{self, SynthConfig};
use fewnist::dataset::DigitPartition;
use fewnist::eval::DEFAULT_N_EVAL;
use fewnist::fewshot::{few_shot_session, ShotConfig};
use fewnist::network::Mlp;
use fewnist::rng::{train_seed, SeededRng};
use fewnist::trainer::{pretrain, run_lr_sweep, TrainConfig};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

/// Grid behind the documented default learning rate.
const SWEEP_RATES: [f64; 4] = [0.03, 0.1, 0.3, 1.0];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(serde::Serialize)]
struct SeedRecord {
    seed: u64,
    final_loss: f64,
    final_accuracy: f64,
}

#[derive(serde::Serialize)]
struct PretrainBaseline {
    config: TrainConfig,
    seeds: Vec<SeedRecord>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let out = Path::new("baselines");
    fs::create_dir_all(out)?;

    let (train, test) = synth::labeled_sets(&SynthConfig::default())?;
    let partition = DigitPartition::default();
    let old_train = train.filter_by_digits(partition.pretrain_digits());
    let novel_train = train.filter_by_digits(partition.novel_digits());
    let old_test = test.filter_by_digits(partition.pretrain_digits());

    let base = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let sweep = run_lr_sweep(&old_train, &old_test, &SWEEP_RATES, &base)?;
    write_json(&out.join("lr_sweep.json"), &sweep)?;

    // Desk-scale accuracy per seed; the seed 1 net also feeds the session
    // baseline below.
    let mut seeds = Vec::new();
    let mut seed_one_net = None;
    for seed in SEEDS {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let mut rng = SeededRng::new(train_seed(seed));
        let mut net = Mlp::default_sized(&mut rng);
        let report = pretrain(&mut net, &old_train, Some(&old_test), &cfg, &mut rng)?;
        seeds.push(SeedRecord {
            seed,
            final_loss: report.history.last().map_or(f64::NAN, |s| s.loss),
            final_accuracy: report.final_accuracy.unwrap_or(f64::NAN),
        });
        if seed == 1 {
            seed_one_net = Some(net.clone());
        }
        println!("pretrain seed {seed}: accuracy {:?}", report.final_accuracy);
    }
    write_json(
        &out.join("pretrain.json"),
        &PretrainBaseline {
            config: TrainConfig::default(),
            seeds,
        },
    )?;

    // A reference session: per-shot descent step counts and metrics.
    let mut net = seed_one_net.expect("seed 1 is in SEEDS");
    let shot_cfg = ShotConfig {
        seed: 1,
        ..ShotConfig::default()
    };
    let results = few_shot_session(
        &mut net,
        &novel_train,
        &old_train,
        &shot_cfg,
        10,
        &test,
        &partition,
        DEFAULT_N_EVAL,
    )?;
    write_json(&out.join("session.json"), &results)?;
    Ok(())
}
