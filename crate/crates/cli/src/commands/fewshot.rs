//! `fewnist fewshot`: run a few-shot session from a checkpoint, writing one
//! metrics row per shot as CSV and the full per-shot records as JSON lines.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fewnist::eval::DEFAULT_N_EVAL;
use fewnist::fewshot::few_shot_session;
use fewnist::trainer::ConfigEcho;
use fewnist::{MetricsRow, Mlp, ShotResult, TrainReport};

use crate::commands::{pretrain, RunCtx};
use crate::config::{ExperimentConfig, Variant};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SHOTS_FILE: &str = "shots.jsonl";

pub fn run(cfg: &ExperimentConfig, checkpoint: Option<&Path>, ctx: &mut RunCtx) -> Result<()> {
    let Some(ckpt_path) = checkpoint else {
        bail!("fewshot needs --checkpoint pointing at a pretrained network");
    };
    check_checkpoint_kind(ckpt_path, cfg.variant)?;
    let mut net = Mlp::load(ckpt_path)
        .with_context(|| format!("loading checkpoint {}", ckpt_path.display()))?;

    let (train, test, source) = cfg.data.load()?;
    ctx.dataset_source = Some(source);
    let partition = cfg.partition()?;
    let old_train = train.filter_by_digits(partition.pretrain_digits());
    let novel_train = train.filter_by_digits(partition.novel_digits());

    let results = few_shot_session(
        &mut net,
        &novel_train,
        &old_train,
        &cfg.shot,
        cfg.n_shots,
        &test,
        &partition,
        DEFAULT_N_EVAL,
    )?;

    write_metrics(&results, &cfg.out_dir.join(METRICS_FILE))?;
    ctx.record(METRICS_FILE);
    write_shot_events(&results, &cfg.out_dir.join(SHOTS_FILE))?;
    ctx.record(SHOTS_FILE);

    if let Some(last) = results.last() {
        let m = &last.metrics;
        println!(
            "{} session, shot {}: old {:.4}, new {:.4}, only-new {:.4}, overall {:.4}",
            cfg.variant.tag(),
            m.shot,
            m.acc_old,
            m.acc_new,
            m.acc_only_new,
            m.acc_overall
        );
    } else {
        println!("{} session: 0 shots, header-only CSV", cfg.variant.tag());
    }
    Ok(())
}

/// A `fewshot_pretrain` session expects a checkpoint produced by
/// `pretrain --variant fewshot_pretrain` and the other variants expect a
/// batch-pretrained one. The kind is read from the training report next to
/// the checkpoint; a bare checkpoint without one is accepted as-is.
fn check_checkpoint_kind(ckpt_path: &Path, variant: Variant) -> Result<()> {
    let Some(dir) = ckpt_path.parent() else {
        return Ok(());
    };
    let report_path = dir.join(pretrain::REPORT_FILE);
    let Ok(text) = std::fs::read_to_string(&report_path) else {
        return Ok(());
    };
    let report: TrainReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", report_path.display()))?;
    let from_fewshot = matches!(report.config, ConfigEcho::FewshotPretrain(_));
    let wants_fewshot = variant == Variant::FewshotPretrain;
    if from_fewshot != wants_fewshot {
        bail!(
            "variant/checkpoint mismatch: {} was produced by {} pre-training \
             but the variant is {}",
            ckpt_path.display(),
            if from_fewshot { "few-shot" } else { "batch" },
            variant.tag()
        );
    }
    Ok(())
}

fn write_metrics(results: &[ShotResult], path: &Path) -> Result<()> {
    let mut text = String::from(MetricsRow::CSV_HEADER);
    text.push('\n');
    for r in results {
        text.push_str(&r.metrics.csv_line());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_shot_events(results: &[ShotResult], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    for r in results {
        let line = serde_json::to_string(r).context("serializing shot record")?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
