//! Expected effective ratio and gradient curves for both bounds.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use cliplab_core::expectation::{
    expected_gradient, expected_ratio, mc_merge, mc_shard, mc_shard_plan, rescue_probability,
    Approach, McEstimate, RescueProfile,
};
use cliplab_core::ratio_ops::Bound;
use cliplab_core::rng::derive_seed;

use super::Context;
use crate::config::{AnalyzeSection, ResolvedAnalyze};
use crate::error::{check, CliError};
use crate::output::{csv_finish, csv_row, csv_writer, fmt_g, Stamp};

pub const HEADER: [&str; 8] = [
    "r", "f_closed", "g_closed", "f_mc", "f_mc_stderr", "g_mc", "g_mc_stderr", "p_rescue",
];

#[derive(Serialize)]
struct Stamped<'a> {
    analyze: &'a ResolvedAnalyze,
}

/// One curve row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub r: f64,
    pub f: f64,
    pub g: f64,
    pub mc: Option<McEstimate>,
    pub p_rescue: f64,
}

/// Evaluates one side on the grid. Monte Carlo shards run on the current
/// rayon pool and are merged in shard order.
pub fn curve(
    profile: &RescueProfile,
    grid: &[f64],
    mc_samples: u64,
    seed: u64,
) -> Result<Vec<CurveRow>, CliError> {
    let side = match profile.side() {
        Bound::Upper => 0,
        Bound::Lower => 1,
    };
    // f is the identity up to and including the bound, so report the
    // matching one-sided slope at breakpoints.
    let approach = match profile.side() {
        Bound::Upper => Approach::FromBelow,
        Bound::Lower => Approach::FromAbove,
    };
    grid.par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mc = if mc_samples > 0 {
                let row_seed = derive_seed(seed, &[side, i as u64]);
                let plan: Vec<_> = mc_shard_plan(mc_samples).collect();
                let shards = plan
                    .par_iter()
                    .map(|&(s, n)| mc_shard(r, profile, row_seed, s, n))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(mc_merge(&shards).finish())
            } else {
                None
            };
            Ok(CurveRow {
                r,
                f: expected_ratio(r, profile)?,
                g: expected_gradient(r, profile, approach)?,
                mc,
                p_rescue: rescue_probability(r, profile),
            })
        })
        .collect::<Result<Vec<_>, cliplab_core::Error>>()
        .map_err(CliError::from)
}

fn record(row: &CurveRow) -> Vec<String> {
    let mc = |f: fn(&McEstimate) -> f64| row.mc.as_ref().map_or(String::new(), |m| fmt_g(f(m)));
    vec![
        fmt_g(row.r),
        fmt_g(row.f),
        fmt_g(row.g),
        mc(|m| m.mean),
        mc(|m| m.stderr),
        mc(|m| m.grad_mean),
        mc(|m| m.grad_stderr),
        fmt_g(row.p_rescue),
    ]
}

/// Returns the upper and lower CSV paths.
pub fn run(section: &AnalyzeSection, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut problems = Vec::new();
    let cfg = ResolvedAnalyze::resolve(section, &mut problems);
    check(problems)?;
    let upper = RescueProfile::upper(cfg.u, cfg.delta)?;
    let lower = RescueProfile::lower(cfg.l, cfg.delta)?;
    let stamp = Stamp::new("analyze", &Stamped { analyze: &cfg })?;
    stamp.prepare(&ctx.out_dir)?;
    let mut paths = Vec::new();
    for (name, profile, lo, hi) in [
        ("upper", &upper, cfg.upper_min, cfg.upper_max),
        ("lower", &lower, cfg.lower_min, cfg.lower_max),
    ] {
        let grid = cfg.grid_points(lo, hi);
        let rows = ctx.pool.install(|| curve(profile, &grid, cfg.mc_samples, cfg.seed))?;
        let path = stamp.path(&ctx.out_dir, &format!("-{name}.csv"));
        let mut w = csv_writer(&path)?;
        csv_row(&mut w, &path, &HEADER.map(String::from))?;
        for row in &rows {
            csv_row(&mut w, &path, &record(row))?;
        }
        csv_finish(w, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
