//! `fewnist report`: aggregate run directories into per-variant tables of
//! the four accuracy metrics by shot, with per-cell deltas against the
//! published reference values compiled in from `data/reference_tables.json`.
//!
//! Runs of the same variant (typically different seeds) are averaged.
//! Output depends only on the inputs, never on the clock, so regenerating
//! a report is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fewnist::MetricsRow;

use crate::commands::{fewshot, RunCtx};
use crate::config::{ExperimentConfig, Variant};
use crate::manifest::RunManifest;

pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";

const REFERENCE_JSON: &str = include_str!("../../data/reference_tables.json");

const METRIC_NAMES: [&str; 4] = ["acc_old", "acc_new", "acc_only_new", "acc_overall"];

/// Reference metrics by variant and shot, in CSV column order.
pub fn reference_tables() -> Result<BTreeMap<String, BTreeMap<usize, [f64; 4]>>> {
    let raw: BTreeMap<String, BTreeMap<String, [f64; 4]>> =
        serde_json::from_str(REFERENCE_JSON).context("parsing built-in reference tables")?;
    let mut tables = BTreeMap::new();
    for (variant, rows) in raw {
        let mut by_shot = BTreeMap::new();
        for (shot, values) in rows {
            let shot: usize = shot
                .parse()
                .with_context(|| format!("reference shot key {shot:?}"))?;
            by_shot.insert(shot, values);
        }
        tables.insert(variant, by_shot);
    }
    Ok(tables)
}

#[derive(Debug, Default)]
struct VariantGroup {
    n_runs: usize,
    /// Per shot: metric sums and the number of runs contributing.
    by_shot: BTreeMap<usize, ([f64; 4], usize)>,
}

pub fn run(run_dirs: &[PathBuf], cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<()> {
    let reference = reference_tables()?;
    let mut groups: BTreeMap<usize, VariantGroup> = BTreeMap::new();

    for dir in run_dirs {
        let manifest = RunManifest::load(dir)
            .with_context(|| format!("run directory {}", dir.display()))?;
        let rows = read_metrics(&dir.join(fewshot::METRICS_FILE))?;
        let order = Variant::ALL
            .iter()
            .position(|v| *v == manifest.config.variant)
            .expect("every variant is in ALL");
        let group = groups.entry(order).or_default();
        group.n_runs += 1;
        for row in rows {
            let entry = group.by_shot.entry(row.shot).or_insert(([0.0; 4], 0));
            let values = [row.acc_old, row.acc_new, row.acc_only_new, row.acc_overall];
            for (sum, v) in entry.0.iter_mut().zip(values) {
                *sum += v;
            }
            entry.1 += 1;
        }
    }

    let md = render_markdown(&groups, &reference, run_dirs.len());
    let csv = render_csv(&groups, &reference);
    std::fs::write(cfg.out_dir.join(REPORT_MD), md)?;
    ctx.record(REPORT_MD);
    std::fs::write(cfg.out_dir.join(REPORT_CSV), csv)?;
    ctx.record(REPORT_CSV);
    println!(
        "report over {} run(s) written to {}",
        run_dirs.len(),
        cfg.out_dir.join(REPORT_MD).display()
    );
    Ok(())
}

fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == MetricsRow::CSV_HEADER => {}
        other => bail!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            MetricsRow::CSV_HEADER,
            other
        ),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("{} line {}: expected 5 fields", path.display(), i + 2);
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .with_context(|| format!("{} line {}: bad number {s:?}", path.display(), i + 2))
        };
        rows.push(MetricsRow {
            shot: fields[0]
                .parse()
                .with_context(|| format!("{} line {}: bad shot", path.display(), i + 2))?,
            acc_old: parse(fields[1])?,
            acc_new: parse(fields[2])?,
            acc_only_new: parse(fields[3])?,
            acc_overall: parse(fields[4])?,
            n_eval: 0,
        });
    }
    Ok(rows)
}

fn render_markdown(
    groups: &BTreeMap<usize, VariantGroup>,
    reference: &BTreeMap<String, BTreeMap<usize, [f64; 4]>>,
    n_inputs: usize,
) -> String {
    let mut md = String::from("# Session report\n");
    if n_inputs == 0 {
        md.push_str("\nNo run directories were given; nothing to report.\n");
        return md;
    }
    md.push_str("\nCells read `measured (delta vs reference)`.\n");
    for (&order, group) in groups {
        let variant = Variant::ALL[order];
        let refs = reference.get(variant.tag());
        let _ = write!(
            md,
            "\n## {} ({} run{})\n\n",
            variant.tag(),
            group.n_runs,
            if group.n_runs == 1 { "" } else { "s" }
        );
        if group.by_shot.is_empty() {
            md.push_str("No shots were recorded for this variant.\n");
            continue;
        }
        md.push_str("| shot | acc_old | acc_new | acc_only_new | acc_overall |\n");
        md.push_str("|---:|---:|---:|---:|---:|\n");
        let shots: Vec<usize> = group.by_shot.keys().copied().collect();
        let last = *shots.last().expect("nonempty");
        for &shot in &shots {
            // Long sessions print only the rows the reference has, plus the
            // final shot; the CSV always carries every row.
            if shots.len() > 12
                && shot != last
                && refs.map_or(true, |r| !r.contains_key(&shot))
            {
                continue;
            }
            let (sums, n) = group.by_shot[&shot];
            let _ = write!(md, "| {shot} |");
            for (m, &sum) in sums.iter().enumerate() {
                let ours = sum / n as f64;
                match refs.and_then(|r| r.get(&shot)) {
                    Some(row) => {
                        let _ = write!(md, " {ours:.4} ({:+.4}) |", ours - row[m]);
                    }
                    None => {
                        let _ = write!(md, " {ours:.4} |");
                    }
                }
            }
            md.push('\n');
        }
    }
    md
}

fn render_csv(
    groups: &BTreeMap<usize, VariantGroup>,
    reference: &BTreeMap<String, BTreeMap<usize, [f64; 4]>>,
) -> String {
    let mut csv = String::from("variant,shot,n_runs");
    for name in METRIC_NAMES {
        let _ = write!(csv, ",{name}");
    }
    for name in METRIC_NAMES {
        let _ = write!(csv, ",ref_{name}");
    }
    for name in METRIC_NAMES {
        let _ = write!(csv, ",delta_{name}");
    }
    csv.push('\n');
    for (&order, group) in groups {
        let variant = Variant::ALL[order];
        let refs = reference.get(variant.tag());
        for (&shot, &(sums, n)) in &group.by_shot {
            let _ = write!(csv, "{},{shot},{n}", variant.tag());
            let ours: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
            for v in &ours {
                let _ = write!(csv, ",{v:.4}");
            }
            let row = refs.and_then(|r| r.get(&shot));
            for m in 0..4 {
                match row {
                    Some(r) => {
                        let _ = write!(csv, ",{:.4}", r[m]);
                    }
                    None => csv.push(','),
                }
            }
            for m in 0..4 {
                match row {
                    Some(r) => {
                        let _ = write!(csv, ",{:+.4}", ours[m] - r[m]);
                    }
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
    }
    csv
}
