//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p cliplab --test acceptance`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cliplab::commands::analyze::curve;
use cliplab_core::expectation::{
    expected_gradient, expected_ratio, Approach, McEstimate, RescueProfile,
};
use cliplab_core::metrics::{mean_sd, summarize, RunRecord};
use cliplab_core::ratio_ops::{classify_zone, hard_clip, nsr_rescue};
use cliplab_core::rng::substream;
use cliplab_core::surrogate::{token_surrogate, TokenStep};
use cliplab_core::trainer::{train, TrainConfig};
use cliplab_core::{AdmissibleInterval, ClipOperator, ProbeMode, TrustRegion, Zone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Normal, Uniform};
use rayon::prelude::*;

const U: f64 = 1.28;
const L: f64 = 0.8;
const DELTA: f64 = 0.1;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond { Ok(detail) } else { Err(detail) }
}

fn profiles() -> [(RescueProfile, f64, f64, &'static str); 2] {
    [
        (RescueProfile::upper(U, DELTA).unwrap(), 1.0, 1.6, "upper"),
        (RescueProfile::lower(L, DELTA).unwrap(), 0.5, 1.1, "lower"),
    ]
}

/// Monte Carlo columns exactly as `analyze` computes them at its default seed.
fn mc_curve(p: &RescueProfile, grid: &[f64]) -> Vec<McEstimate> {
    curve(p, grid, 1_000_000, 0).unwrap().into_iter().map(|row| row.mc.unwrap()).collect()
}

fn closed_form_vs_monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (p, lo, hi, side) in profiles() {
        let grid: Vec<f64> = (0..50).map(|k| lo + (hi - lo) * f64::from(k) / 49.0).collect();
        for (&r, est) in grid.iter().zip(mc_curve(&p, &grid)) {
            let f = expected_ratio(r, &p).unwrap();
            let tol = (3.0 * est.stderr).max(1e-4);
            let err = (f - est.mean).abs();
            worst = worst.max(err / tol);
            if err >= tol {
                bad.push(format!("{side} r={r:.4}: |{f} - {}| >= {tol:.2e}", est.mean));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 30.0 {
        bad.push(format!("runtime {secs:.1}s"));
    }
    check(bad.is_empty(), format!("100 points, worst err/tol {worst:.3}, {secs:.1}s {}", bad.join("; ")))
}

fn gradient_profile() -> Outcome {
    let mut bad = Vec::new();
    let mut worst_fd = 0.0f64;
    let mut worst_mc = 0.0f64;
    for (p, _, _, side) in profiles() {
        let (z0, z1) = p.rescue_zone();
        let grid: Vec<f64> = (1..=20).map(|k| z0 + (z1 - z0) * f64::from(k) / 21.0).collect();
        for (&r, est) in grid.iter().zip(mc_curve(&p, &grid)) {
            let h = 1e-5;
            let fd = (expected_ratio(r + h, &p).unwrap() - expected_ratio(r - h, &p).unwrap()) / (2.0 * h);
            let g = expected_gradient(r, &p, Approach::FromBelow).unwrap();
            worst_fd = worst_fd.max((fd - g).abs());
            if (fd - g).abs() >= 1e-4 {
                bad.push(format!("{side} fd r={r:.4}: {fd} vs {g}"));
            }
            let z = (est.grad_mean - g).abs() / est.grad_stderr;
            worst_mc = worst_mc.max(z);
            if z > 3.0 {
                bad.push(format!("{side} mc r={r:.4}: {} vs {g} ({z:.2} se)", est.grad_mean));
            }
        }
    }
    check(bad.is_empty(), format!("40 points, max |fd-g| {worst_fd:.2e}, max mc z {worst_mc:.2} {}", bad.join("; ")))
}

fn boundary_values() -> Outcome {
    let p = RescueProfile::upper(U, DELTA).unwrap();
    let f = |r: f64| expected_ratio(r, &p).unwrap();
    let g = |r: f64, a| expected_gradient(r, &p, a).unwrap();
    let sat = U / (1.0 - DELTA);
    let g_plus = (1.0 - (1.0 - DELTA) * (1.0 - DELTA)) / (4.0 * DELTA);
    let h = 1e-7;
    let one_sided = (f(U + 2.0 * h) - f(U + h)) / h;
    let mut bad = Vec::new();
    let mut ok = |cond: bool, what: &str| {
        if !cond {
            bad.push(what.to_string());
        }
    };
    ok((f(U) - U).abs() < 1e-6, "f(u) = u");
    for r in [sat, sat + 1e-6, 1.5, 2.0, 5.0] {
        ok((f(r) - U).abs() < 1e-6, "saturation");
        ok(g(r + 1e-9, Approach::FromAbove).abs() < 1e-6, "g = 0 beyond the zone");
    }
    ok((g_plus - 0.475).abs() < 1e-6, "g(u+) = 0.475");
    ok((g(U, Approach::FromAbove) - g_plus).abs() < 1e-6, "g(u+) closed form");
    ok((one_sided - 0.475).abs() < 1e-6, "one-sided difference at u+");
    ok((g(U, Approach::FromBelow) - 1.0).abs() < 1e-6, "g(u-) = 1");
    check(bad.is_empty(), format!("f(u)={}, g(u+)={}, one-sided fd {one_sided:.9} {}", f(U), g(U, Approach::FromAbove), bad.join("; ")))
}

fn distribution_law() -> Outcome {
    let r = 1.30;
    let n = 1_000_000usize;
    let interval = AdmissibleInterval::upper_bounded(U);
    let mut rng = substream(2024, &[]);
    let mut admitted = Vec::with_capacity(n);
    for _ in 0..n {
        let out = nsr_rescue(r, &interval, DELTA, &mut rng).unwrap();
        if out.gradient_weight > 0.0 {
            admitted.push(out.effective_ratio / r);
        }
    }
    let p = (U / r - (1.0 - DELTA)) / (2.0 * DELTA);
    let freq = admitted.len() as f64 / n as f64;
    let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
    // Kolmogorov-Smirnov against U(1 - delta, u/r)
    admitted.sort_by(f64::total_cmp);
    let (a, b) = (1.0 - DELTA, U / r);
    let m = admitted.len() as f64;
    let d = admitted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = ((x - a) / (b - a)).clamp(0.0, 1.0);
            (cdf - i as f64 / m).abs().max((i as f64 + 1.0) / m - cdf)
        })
        .fold(0.0, f64::max);
    let crit = 1.6276 / m.sqrt();
    check(
        (freq - p).abs() <= tol && d < crit,
        format!("admission {freq:.5} vs p {p:.5} (tol {tol:.5}); KS D {d:.2e} < {crit:.2e}"),
    )
}

fn zone_classifier() -> Outcome {
    let mut rng = ChaCha12Rng::seed_from_u64(55);
    let dist = Uniform::new(0.3, 2.2).unwrap();
    let mut mismatches = 0;
    for (interval, upper) in [
        (AdmissibleInterval::upper_bounded(U), true),
        (AdmissibleInterval::lower_bounded(L), false),
    ] {
        let inside = |x: f64| if upper { x <= U } else { x >= L };
        for _ in 0..10_000 {
            let (d, e) = (rng.sample(dist), rng.sample(dist));
            let brute = match (inside(d), inside(e)) {
                (true, true) => Zone::Safe,
                (false, true) => Zone::Rescued,
                (true, false) => Zone::PushedOut,
                (false, false) => Zone::DeepViolation,
            };
            if classify_zone(d, e, &interval) != brute {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches in 20000 pairs"))
}

fn surrogate_gradient() -> Outcome {
    let ops = [
        ClipOperator::Hard,
        ClipOperator::SoftDecay { k: 2 },
        ClipOperator::Nsr { delta: DELTA },
    ];
    let reports: Vec<_> = ops
        .par_iter()
        .enumerate()
        .map(|(i, op)| (op.label(), support::check_token_level(*op, 900 + i as u64, 100)))
        .collect();
    let pass = reports.iter().all(|(_, r)| r.checked == 100 && r.max_rel_err < 1e-5);
    let detail = reports
        .iter()
        .map(|(l, r)| format!("{l}: max rel err {:.1e} ({} at the boundary)", r.max_rel_err, r.boundary_instances))
        .collect::<Vec<_>>()
        .join(", ");
    check(pass, detail)
}

struct Runs {
    hard: Vec<RunRecord>,
    nsr: Vec<RunRecord>,
}

fn training_runs() -> Runs {
    let cells: Vec<(ClipOperator, u64)> = [ClipOperator::Hard, ClipOperator::Nsr { delta: DELTA }]
        .into_iter()
        .flat_map(|op| (0..3).map(move |s| (op, s)))
        .collect();
    let mut records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(operator, seed)| {
            train(&TrainConfig {
                operator,
                seed,
                steps: 300,
                difficulty: 1,
                ..TrainConfig::default()
            })
            .expect("training run")
        })
        .collect();
    let nsr = records.split_off(3);
    Runs { hard: records, nsr }
}

fn lognormal_batch(rng: &mut ChaCha12Rng, n: usize, sigma: f64) -> Vec<TokenStep> {
    let normal = Normal::new(0.0, sigma).unwrap();
    (0..n)
        .map(|i| TokenStep {
            logprob_new: -1.5 + rng.sample(normal),
            logprob_old: -1.5,
            advantage: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            response_id: (i / 16) as u32,
            position: (i % 16) as u32,
        })
        .collect()
}

fn clip_fraction_ordering(runs: &Runs) -> Outcome {
    let hard: Vec<f64> = runs.hard.iter().map(|r| r.mean_clip_fraction).collect();
    let nsr: Vec<f64> = runs.nsr.iter().map(|r| r.mean_clip_fraction).collect();
    let (mh, _) = mean_sd(&hard).unwrap();
    let (mn, _) = mean_sd(&nsr).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let mut violations = 0;
    for b in 0..1000u64 {
        let sigma = 0.02 + 0.4 * (b as f64 / 1000.0);
        let batch = lognormal_batch(&mut rng, 256, sigma);
        let h = token_surrogate(&batch, &ClipOperator::Hard, TrustRegion::DAPO, b).unwrap();
        let n = token_surrogate(&batch, &ClipOperator::Nsr { delta: DELTA }, TrustRegion::DAPO, b).unwrap();
        if n.clip_fraction > h.clip_fraction {
            violations += 1;
        }
    }
    check(
        mn < mh && violations == 0,
        format!("mean clip fraction nsr {mn:.5} < hard {mh:.5}; per-batch violations {violations}/1000"),
    )
}

fn decision_flips() -> Outcome {
    let mut rng = ChaCha12Rng::seed_from_u64(88);
    let batch = lognormal_batch(&mut rng, 100_000, 0.2);
    let hw = 0.2;
    let hard = token_surrogate(&batch, &ClipOperator::Hard, TrustRegion::DAPO, 3).unwrap();
    let rate = |mode| {
        let op = ClipOperator::NoiseProbe { mode, half_width: hw };
        let res = token_surrogate(&batch, &op, TrustRegion::DAPO, 3).unwrap();
        assert_eq!(res.active_tokens, hard.active_tokens);
        res.decision_flips as f64 / res.active_tokens as f64
    };
    let coupled = rate(ProbeMode::Coupled);
    let others = [ProbeMode::Decoupled, ProbeMode::OnlyRescue, ProbeMode::OnlyPushOut].map(rate);
    // independent recount for the coupled probe: masks from r*z vs r
    let mut recount = 0u64;
    let z = cliplab_core::surrogate::token_noise(
        &ClipOperator::NoiseProbe { mode: ProbeMode::Coupled, half_width: hw },
        3,
        &batch,
    );
    for (t, z) in batch.iter().zip(&z) {
        let iv = TrustRegion::DAPO.interval(cliplab_core::AdvantageSign::of(t.advantage).unwrap());
        let clean = hard_clip(t.ratio(), &iv).unwrap().decision_mask;
        if iv.contains(t.ratio() * z) != clean {
            recount += 1;
        }
    }
    let recount = recount as f64 / batch.len() as f64;
    check(
        coupled > 0.0 && (coupled - recount).abs() < 1e-15 && others.iter().all(|&r| r == 0.0),
        format!("coupled {coupled:.4} (recount {recount:.4}); decoupled/only-rescue/only-push-out {others:?}"),
    )
}

fn table_arithmetic() -> Outcome {
    // (method, per-run Pass@1, mean, sd, per-run Pass@16, mean, sd)
    type Row = (&'static str, [f64; 3], f64, f64, [f64; 3], f64, f64);
    let rows: [Row; 6] = [
        ("dapo", [37.19, 35.10, 35.21], 35.83, 1.18, [58.00, 51.48, 55.68], 55.05, 3.30),
        ("binary", [37.70, 39.58, 36.25], 37.84, 1.67, [57.72, 56.64, 58.53], 57.63, 0.95),
        ("decay-k2", [40.52, 36.35, 39.17], 38.68, 2.13, [57.20, 57.27, 54.23], 56.23, 1.73),
        ("decay-k3", [39.90, 39.89, 37.08], 38.96, 1.62, [56.04, 53.95, 57.24], 55.74, 1.66),
        ("decay-k4", [38.85, 39.06, 35.31], 37.74, 2.11, [50.16, 55.15, 56.92], 54.08, 3.50),
        ("nsr", [42.50, 39.48, 40.31], 40.76, 1.56, [58.16, 56.75, 58.19], 57.70, 0.82),
    ];
    let record = |v: f64| RunRecord {
        config_hash: String::new(),
        per_step: vec![cliplab_core::metrics::StepMetrics {
            step: 0,
            mean_reward: 0.0,
            pass_rate: v,
            clip_fraction: 0.0,
            zone_counts: Default::default(),
            entropy: 0.0,
            mean_length: 0.0,
            degenerate_groups: 0,
        }],
        initial_pass_rate: 0.0,
        final_pass_rate: v,
        mean_clip_fraction: 0.0,
        flip_rate: 0.0,
    };
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (name, p1, m1, s1, p16, m16, s16) in rows {
        for (runs, mean, sd) in [(p1, m1, s1), (p16, m16, s16)] {
            let recs: Vec<_> = runs.iter().map(|&v| record(v)).collect();
            let s = summarize(&recs, 1).unwrap();
            let err = (s.mean - mean).abs().max((s.sd - sd).abs());
            worst = worst.max(err);
            if err > 0.01 {
                bad.push(format!("{name}: {:.3} ± {:.3} vs {mean} ± {sd}", s.mean, s.sd));
            }
        }
    }
    check(bad.is_empty(), format!("12 aggregates, worst deviation {worst:.4} {}", bad.join("; ")))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 4] = [
        &["analyze", "--grid", "50", "--mc-samples", "200000", "--seed", "4"],
        &["train", "--steps", "20", "--operator", "nsr", "--seed", "5"],
        &["ablate", "--steps", "8", "--seeds", "0,1", "--tasks-per-step", "8"],
        &["zones", "--samples", "20000", "--seed", "6"],
    ];
    let mut bad = Vec::new();
    let mut files = 0;
    for args in commands {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "1", "7"] {
            let dir = tempfile::TempDir::new().unwrap();
            let status = Command::new(env!("CARGO_BIN_EXE_cliplab"))
                .args(args)
                .args(["--threads", threads, "--out-dir"])
                .arg(dir.path())
                .env_remove("CLIPLAB_SEED")
                .output()
                .unwrap()
                .status;
            if !status.success() {
                bad.push(format!("{} exited {status}", args[0]));
            }
            outputs.push(dir_bytes(dir.path()));
        }
        files += outputs[0].len();
        if outputs.iter().any(|o| *o != outputs[0] || o.is_empty()) {
            bad.push(format!("{} outputs differ", args[0]));
        }
    }
    check(bad.is_empty(), format!("4 commands x 4 runs (threads 1/4/1/7), {files} files each {}", bad.join("; ")))
}

fn training_sanity(runs: &Runs) -> Outcome {
    let h0 = &runs.hard[0];
    let gain = h0.final_pass_rate - h0.initial_pass_rate;
    let window = 10;
    let hard = summarize(&runs.hard, window).unwrap();
    let nsr = summarize(&runs.nsr, window).unwrap();
    let pooled = ((hard.sd * hard.sd + nsr.sd * nsr.sd) / 2.0).sqrt();
    check(
        gain >= 0.1 && nsr.mean >= hard.mean - pooled,
        format!(
            "hard seed 0: {:.4} -> {:.4} (gain {gain:.4}); final hard {:.5} ± {:.5}, nsr {:.5} ± {:.5}",
            h0.initial_pass_rate, h0.final_pass_rate, hard.mean, hard.sd, nsr.mean, nsr.sd
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {n:>2} {name}: {}", detail.trim_end());
    };
    report(1, "closed form vs Monte Carlo", closed_form_vs_monte_carlo());
    report(2, "gradient profile", gradient_profile());
    report(3, "piecewise boundary values", boundary_values());
    report(4, "rescue distribution law", distribution_law());
    report(5, "zone classifier", zone_classifier());
    report(6, "surrogate gradient check", surrogate_gradient());
    let start = Instant::now();
    let runs = training_runs();
    let train_secs = start.elapsed().as_secs_f64();
    let mut ordering = clip_fraction_ordering(&runs);
    if train_secs >= 900.0 {
        ordering = Err(format!("matrix took {train_secs:.0}s"));
    }
    report(7, "clip-fraction ordering", ordering.map(|d| format!("{d}; matrix {train_secs:.1}s")));
    report(8, "decision flips", decision_flips());
    report(9, "table arithmetic", table_arithmetic());
    report(10, "determinism", determinism());
    report(11, "training sanity", training_sanity(&runs));
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
