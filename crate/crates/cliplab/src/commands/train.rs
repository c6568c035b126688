//! Single training run with streamed metrics.

use std::path::PathBuf;

use serde::Serialize;

use cliplab_core::metrics::{summarize, RunRecord};
use cliplab_core::trainer::{train_with, TrainConfig};

use super::Context;
use crate::config::{
    validate_train, FileConfig, ResolvedOperator, ResolvedRegion, ResolvedTrain,
};
use crate::error::{check, CliError};
use crate::output::{csv_finish, csv_row, csv_writer, fmt_g, JsonlSink, Stamp};

pub const SUMMARY_HEADER: [&str; 4] = ["config", "seed", "final", "peak"];

#[derive(Serialize)]
struct Stamped<'a> {
    operator: &'a ResolvedOperator,
    region: &'a ResolvedRegion,
    train: &'a ResolvedTrain,
}

/// Outputs of one training run.
#[derive(Debug)]
pub struct TrainOutput {
    pub jsonl: PathBuf,
    pub summary: PathBuf,
    pub record: RunRecord,
    pub final_value: f64,
    pub peak: f64,
}

/// Resolves settings for `train`; `merged` already has flags applied and
/// `steps` present.
pub fn resolve(
    merged: &FileConfig,
    steps: u64,
) -> Result<(TrainConfig, ResolvedOperator, ResolvedRegion, ResolvedTrain), CliError> {
    let mut problems = Vec::new();
    let train = ResolvedTrain::resolve(&merged.train, steps, &mut problems);
    let operator = ResolvedOperator::resolve(&merged.operator, train.granularity);
    let region = ResolvedRegion::resolve(&merged.region);
    let cfg = train.train_config(operator.operator(), region.region(&mut problems));
    validate_train(&cfg, &mut problems);
    train.check_window(&mut problems);
    check(problems)?;
    Ok((cfg, operator, region, train))
}

pub fn run(merged: &FileConfig, steps: u64, ctx: &Context) -> Result<TrainOutput, CliError> {
    let (cfg, operator, region, train) = resolve(merged, steps)?;
    let stamp = Stamp::new(
        "train",
        &Stamped {
            operator: &operator,
            region: &region,
            train: &train,
        },
    )?;
    stamp.prepare(&ctx.out_dir)?;
    let jsonl = stamp.path(&ctx.out_dir, ".jsonl");
    let mut sink = JsonlSink::create(&jsonl)?;
    let record = train_with(&cfg, |m| sink.append_record(m).map_err(|e| e.to_string()))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary = summarize(std::slice::from_ref(&record), train.window)?;
    let run = summary.per_run[0];

    let path = stamp.path(&ctx.out_dir, "-summary.csv");
    let label = cfg.operator.label();
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, &SUMMARY_HEADER.map(String::from))?;
    csv_row(
        &mut w,
        &path,
        &[label.clone(), cfg.seed.to_string(), fmt_g(run.final_value), fmt_g(run.peak)],
    )?;
    // single run: the mean equals the run and the sample SD is 0
    csv_row(&mut w, &path, &[label.clone(), "mean".into(), fmt_g(summary.mean), fmt_g(run.peak)])?;
    csv_row(&mut w, &path, &[label, "sd".into(), fmt_g(summary.sd), fmt_g(0.0)])?;
    csv_finish(w, &path)?;
    Ok(TrainOutput {
        jsonl,
        summary: path,
        final_value: run.final_value,
        peak: run.peak,
        record,
    })
}
