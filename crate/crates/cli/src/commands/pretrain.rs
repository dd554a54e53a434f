//! `fewnist pretrain`: train a fresh network on the pre-training digits and
//! write a checkpoint plus a JSON training report.
//!
//! With `--variant fewshot_pretrain` the batch loop is replaced by the shot
//! procedure over a one-sample stream enriched from the recent-sample
//! buffer; every other variant pre-trains identically (the variants differ
//! in the shot phase, not here).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fewnist::fewshot::{
    fewshot_pretrain, FewshotPretrainConfig, FEWSHOT_PRETRAIN_FACTORS, FEWSHOT_PRETRAIN_INIT_STDS,
};
use fewnist::network::DEFAULT_SHAPES;
use fewnist::rng::train_seed;
use fewnist::trainer::pretrain;
use fewnist::{ActivationSpec, Mlp, SeededRng, TrainReport};

use crate::config::{ExperimentConfig, Variant};
use crate::commands::RunCtx;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPORT_FILE: &str = "train_report.json";

pub fn run(cfg: &ExperimentConfig, checkpoint: Option<&Path>, ctx: &mut RunCtx) -> Result<()> {
    let (train, test, source) = cfg.data.load()?;
    ctx.dataset_source = Some(source);
    let partition = cfg.partition()?;
    let old_train = train.filter_by_digits(partition.pretrain_digits());
    let old_test = test.filter_by_digits(partition.pretrain_digits());

    let mut rng = SeededRng::new(train_seed(cfg.seed));
    let (net, report) = match cfg.variant {
        Variant::FewshotPretrain => {
            let mut net = Mlp::init(
                &DEFAULT_SHAPES,
                &FEWSHOT_PRETRAIN_INIT_STDS,
                ActivationSpec::default(),
                &mut rng,
            )?;
            let fsp = FewshotPretrainConfig {
                shot: fewnist::ShotConfig {
                    layer_lr_factors: FEWSHOT_PRETRAIN_FACTORS.to_vec(),
                    ..cfg.shot.clone()
                },
                buffer_cap: cfg.buffer_cap,
                n_shots: cfg.fewshot_pretrain_shots,
            };
            let report = fewshot_pretrain(&mut net, &old_train, Some(&old_test), &fsp, &mut rng)?;
            (net, report)
        }
        _ => {
            let mut net = Mlp::default_sized(&mut rng);
            let report = pretrain(&mut net, &old_train, Some(&old_test), &cfg.train, &mut rng)?;
            (net, report)
        }
    };

    let ckpt_path = match checkpoint {
        Some(path) => path.to_path_buf(),
        None => cfg.out_dir.join(CHECKPOINT_FILE),
    };
    net.save(&ckpt_path)
        .with_context(|| format!("writing {}", ckpt_path.display()))?;
    ctx.record(relative_to_out(&ckpt_path, &cfg.out_dir));

    write_report(&report, &cfg.out_dir.join(REPORT_FILE))?;
    ctx.record(REPORT_FILE);

    match report.final_accuracy {
        Some(acc) => println!(
            "pretrained ({}): accuracy {acc:.4} on the held-out pre-training digits, \
             checkpoint at {}",
            cfg.variant.tag(),
            ckpt_path.display()
        ),
        None => println!(
            "pretrained ({}): checkpoint at {}",
            cfg.variant.tag(),
            ckpt_path.display()
        ),
    }
    Ok(())
}

fn write_report(report: &TrainReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).context("serializing training report")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Manifest entries are relative to the run directory when possible.
fn relative_to_out(path: &Path, out_dir: &Path) -> PathBuf {
    path.strip_prefix(out_dir).unwrap_or(path).to_path_buf()
}
