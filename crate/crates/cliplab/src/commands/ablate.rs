//! Operator-by-seed matrix with per-run finals and mean ± SD per operator.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use cliplab_core::metrics::{mean_sd, RunRecord};
use cliplab_core::trainer::{assemble_matrix, matrix_cells, train_with, MatrixResult};

use super::Context;
use crate::config::{
    parse_operator_label, validate_train, FileConfig, ResolvedAblate, ResolvedOperator,
    ResolvedRegion, ResolvedTrain,
};
use crate::error::{check, CliError};
use crate::output::{csv_finish, csv_row, csv_writer, fmt_g, JsonlSink, Stamp};

/// Default run length for the matrix.
pub const DEFAULT_STEPS: u64 = 300;

#[derive(Serialize)]
struct Stamped<'a> {
    ablate: &'a ResolvedAblate,
    operator: &'a ResolvedOperator,
    region: &'a ResolvedRegion,
    train: &'a ResolvedTrain,
}

#[derive(Debug)]
pub struct AblateOutput {
    pub csv: PathBuf,
    pub text: PathBuf,
    pub jsonl: Vec<PathBuf>,
    pub matrix: MatrixResult,
    pub table: String,
}

fn cell_value(run: &Result<RunRecord, cliplab_core::Error>, window: usize, peak: bool) -> Option<f64> {
    let rec = run.as_ref().ok()?;
    if peak {
        Some(rec.peak_pass_rate())
    } else {
        let tail = &rec.per_step[rec.per_step.len() - window..];
        Some(tail.iter().map(|m| m.pass_rate).sum::<f64>() / window as f64)
    }
}

/// Per-run values of one row for one metric plus their mean and SD.
fn row_stats(
    runs: &[(u64, Result<RunRecord, cliplab_core::Error>)],
    window: usize,
    peak: bool,
) -> (Vec<Option<f64>>, Option<(f64, f64)>) {
    let values: Vec<_> = runs.iter().map(|(_, r)| cell_value(r, window, peak)).collect();
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    (values, mean_sd(&ok).ok())
}

/// Aligned table in percent, one row per operator.
pub fn render_table(m: &MatrixResult, seeds: &[u64]) -> String {
    let pct = |v: Option<f64>| v.map_or("failed".to_string(), |x| format!("{:.2}", 100.0 * x));
    let ms = |s: Option<(f64, f64)>| {
        s.map_or("-".to_string(), |(m, sd)| format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * sd))
    };
    let mut header = vec!["method".to_string()];
    for metric in ["final", "peak"] {
        header.extend(seeds.iter().map(|s| format!("{metric} s{s}")));
        header.push(format!("{metric} mean ± sd"));
    }
    let mut rows = vec![header];
    for row in &m.rows {
        let mut cells = vec![row.label.clone()];
        for peak in [false, true] {
            let (values, stats) = row_stats(&row.runs, m.window, peak);
            cells.extend(values.into_iter().map(pct));
            cells.push(ms(stats));
        }
        rows.push(cells);
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn run(merged: &FileConfig, ctx: &Context) -> Result<AblateOutput, CliError> {
    let mut problems = Vec::new();
    let ablate = ResolvedAblate::resolve(&merged.ablate, &mut problems);
    let steps = merged.train.steps.unwrap_or(DEFAULT_STEPS);
    let train = ResolvedTrain::resolve(&merged.train, steps, &mut problems);
    let operator = ResolvedOperator::resolve(&merged.operator, train.granularity);
    let region_cfg = ResolvedRegion::resolve(&merged.region);
    let region = region_cfg.region(&mut problems);
    let mut configs = Vec::new();
    for label in &ablate.operators {
        match parse_operator_label(label, operator.delta, operator.half_width) {
            Some(op) => configs.push(train.train_config(op, region)),
            None => problems.push(format!("ablate.operators: unknown operator `{label}`")),
        }
    }
    for cfg in &configs {
        validate_train(cfg, &mut problems);
    }
    train.check_window(&mut problems);
    problems.dedup();
    check(problems)?;

    let stamp = Stamp::new(
        "ablate",
        &Stamped {
            ablate: &ablate,
            operator: &operator,
            region: &region_cfg,
            train: &train,
        },
    )?;
    stamp.prepare(&ctx.out_dir)?;
    let cells = matrix_cells(&configs, &ablate.seeds)?;
    let jsonl: Vec<PathBuf> = cells
        .iter()
        .map(|c| stamp.path(&ctx.out_dir, &format!("-{}-seed{}.jsonl", c.operator.label(), c.seed)))
        .collect();
    let results: Vec<_> = ctx.pool.install(|| {
        cells
            .par_iter()
            .zip(&jsonl)
            .map(|(cfg, path)| {
                let mut sink =
                    JsonlSink::create(path).map_err(|e| cliplab_core::Error::Observer(e.to_string()))?;
                train_with(cfg, |m| sink.append_record(m).map_err(|e| e.to_string()))
            })
            .collect()
    });
    let matrix = assemble_matrix(&configs, &ablate.seeds, results, train.window)?;

    let csv = stamp.path(&ctx.out_dir, ".csv");
    let mut w = csv_writer(&csv)?;
    let mut header = vec!["method".to_string()];
    for metric in ["final", "peak"] {
        header.extend(ablate.seeds.iter().map(|s| format!("{metric}_seed_{s}")));
        header.push(format!("{metric}_mean"));
        header.push(format!("{metric}_sd"));
    }
    csv_row(&mut w, &csv, &header)?;
    for row in &matrix.rows {
        let mut cells = vec![row.label.clone()];
        for peak in [false, true] {
            let (values, stats) = row_stats(&row.runs, matrix.window, peak);
            cells.extend(values.into_iter().map(|v| v.map_or("failed".into(), fmt_g)));
            match stats {
                Some((m, sd)) => cells.extend([fmt_g(m), fmt_g(sd)]),
                None => cells.extend([String::new(), String::new()]),
            }
        }
        csv_row(&mut w, &csv, &cells)?;
    }
    csv_finish(w, &csv)?;

    let mut table = render_table(&matrix, &ablate.seeds);
    let failures: Vec<String> = matrix
        .rows
        .iter()
        .flat_map(|row| {
            row.runs.iter().filter_map(move |(seed, r)| {
                r.as_ref().err().map(|e| format!("{} seed {seed}: {e}", row.label))
            })
        })
        .collect();
    if !failures.is_empty() {
        table.push_str("\nfailed cells:\n");
        for f in &failures {
            table.push_str(&format!("  {f}\n"));
        }
    }
    let text = stamp.path(&ctx.out_dir, ".txt");
    std::fs::write(&text, &table).map_err(|e| CliError::io(&text, e))?;
    Ok(AblateOutput {
        csv,
        text,
        jsonl,
        matrix,
        table,
    })
}
