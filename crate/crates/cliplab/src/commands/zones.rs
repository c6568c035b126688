//! Decision/execution scatter data for both bound sides.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution as _, LogNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use cliplab_core::ratio_ops::classify_zone;
use cliplab_core::rng::{substream, tag, uniform_around_one};
use cliplab_core::{AdmissibleInterval, TrustRegion, Zone};

use super::Context;
use crate::config::{Distribution, ResolvedRegion, ResolvedZones, ZonesSection, RegionSection};
use crate::error::{check, CliError};
use crate::output::{csv_finish, csv_row, csv_writer, fmt_g, Stamp};

/// Points per RNG shard.
pub const SHARD: usize = 4096;

#[derive(Serialize)]
struct Stamped<'a> {
    region: &'a ResolvedRegion,
    zones: &'a ResolvedZones,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonePoint {
    pub r_dec: f64,
    pub r_exec: f64,
    pub zone: Zone,
}

fn draw_ratio<R: Rng>(cfg: &ResolvedZones, rng: &mut R) -> f64 {
    match cfg.distribution {
        Distribution::Lognormal => LogNormal::new(0.0, cfg.sigma)
            .expect("validated sigma")
            .sample(rng),
        Distribution::Uniform => Uniform::new(cfg.r_min, cfg.r_max)
            .expect("validated range")
            .sample(rng),
    }
}

/// Samples `cfg.samples` points for one side. Shard `s` of side `side` owns
/// the stream `(seed, ZONES, side, s)`.
pub fn sample_side(cfg: &ResolvedZones, interval: &AdmissibleInterval, side: u64) -> Vec<ZonePoint> {
    let shards = cfg.samples.div_ceil(SHARD);
    (0..shards)
        .into_par_iter()
        .flat_map_iter(|s| {
            let n = SHARD.min(cfg.samples - s * SHARD);
            let mut rng = substream(cfg.seed, &[tag::ZONES, side, s as u64]);
            (0..n)
                .map(|_| {
                    let r_dec = draw_ratio(cfg, &mut rng);
                    let r_exec = r_dec * uniform_around_one(&mut rng, cfg.half_width);
                    ZonePoint {
                        r_dec,
                        r_exec,
                        zone: classify_zone(r_dec, r_exec, interval),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn run(
    zones: &ZonesSection,
    region: &RegionSection,
    ctx: &Context,
) -> Result<Vec<PathBuf>, CliError> {
    let mut problems = Vec::new();
    let cfg = ResolvedZones::resolve(zones, &mut problems);
    let region_cfg = ResolvedRegion::resolve(region);
    let region: TrustRegion = region_cfg.region(&mut problems);
    check(problems)?;
    let stamp = Stamp::new(
        "zones",
        &Stamped {
            region: &region_cfg,
            zones: &cfg,
        },
    )?;
    stamp.prepare(&ctx.out_dir)?;
    let mut paths = Vec::new();
    for (side, name, interval) in [
        (0, "upper", AdmissibleInterval::upper_bounded(region.upper())),
        (1, "lower", AdmissibleInterval::lower_bounded(region.lower())),
    ] {
        let points = ctx.pool.install(|| sample_side(&cfg, &interval, side));
        let path = stamp.path(&ctx.out_dir, &format!("-{name}.csv"));
        let mut w = csv_writer(&path)?;
        csv_row(&mut w, &path, &["r_dec", "r_exec", "zone"].map(String::from))?;
        for p in &points {
            csv_row(
                &mut w,
                &path,
                &[fmt_g(p.r_dec), fmt_g(p.r_exec), p.zone.as_str().to_string()],
            )?;
        }
        csv_finish(w, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
