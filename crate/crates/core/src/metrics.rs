//! Step diagnostics and cross-run aggregation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratio_ops::Zone;

/// Token counts per zone. Serializes with all five keys, zeros included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase", deny_unknown_fields)]
pub struct ZoneCounts {
    pub safe: u64,
    pub rescued: u64,
    pub pushed_out: u64,
    pub deep_violation: u64,
    pub clipped_fallback: u64,
}

impl ZoneCounts {
    fn slot(&mut self, zone: Zone) -> &mut u64 {
        match zone {
            Zone::Safe => &mut self.safe,
            Zone::Rescued => &mut self.rescued,
            Zone::PushedOut => &mut self.pushed_out,
            Zone::DeepViolation => &mut self.deep_violation,
            Zone::ClippedFallback => &mut self.clipped_fallback,
        }
    }

    pub fn add(&mut self, zone: Zone, n: u64) {
        *self.slot(zone) += n;
    }

    pub fn get(&self, zone: Zone) -> u64 {
        match zone {
            Zone::Safe => self.safe,
            Zone::Rescued => self.rescued,
            Zone::PushedOut => self.pushed_out,
            Zone::DeepViolation => self.deep_violation,
            Zone::ClippedFallback => self.clipped_fallback,
        }
    }

    pub fn total(&self) -> u64 {
        Zone::ALL.iter().map(|&z| self.get(z)).sum()
    }

    pub fn merge(&mut self, other: &ZoneCounts) {
        for z in Zone::ALL {
            self.add(z, other.get(z));
        }
    }
}

/// Diagnostics for one outer training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepMetrics {
    pub step: u64,
    /// Mean verifier reward of every sampled response (final attempt per task).
    pub mean_reward: f64,
    /// Exact pass probability after this step's updates, averaged over prompts.
    pub pass_rate: f64,
    /// Gated tokens over nonzero-advantage tokens, pooled over inner epochs.
    pub clip_fraction: f64,
    /// Zone histogram of nonzero-advantage tokens, pooled over inner epochs.
    pub zone_counts: ZoneCounts,
    /// Mean next-token entropy of the sampling policy on its own samples.
    pub entropy: f64,
    /// Mean number of generated tokens per response.
    pub mean_length: f64,
    pub degenerate_groups: u64,
}

/// Full trajectory of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub per_step: Vec<StepMetrics>,
    /// Exact pass probability of the initial policy.
    pub initial_pass_rate: f64,
    pub final_pass_rate: f64,
    /// Pooled clip fraction over the whole run.
    pub mean_clip_fraction: f64,
    /// Fraction of nonzero-advantage tokens whose decision mask differs from
    /// the hard-clipping mask of the clean ratio.
    pub flip_rate: f64,
}

impl RunRecord {
    /// Highest per-step pass rate.
    pub fn peak_pass_rate(&self) -> f64 {
        self.per_step
            .iter()
            .map(|m| m.pass_rate)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Trailing-window final and peak of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunFinal {
    pub final_value: f64,
    pub peak: f64,
}

/// Per-run finals with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub per_run: Vec<RunFinal>,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample (n - 1) standard deviation; the SD of one value is 0.
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::NoRuns);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, libm::sqrt(ss / (n - 1.0))))
}

/// Final metric per run is the mean pass rate over the last `window` steps.
pub fn summarize(records: &[RunRecord], window: usize) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::NoRuns);
    }
    let mut per_run = Vec::with_capacity(records.len());
    for rec in records {
        let steps = rec.per_step.len();
        if window == 0 || window > steps {
            return Err(Error::InvalidConfig(alloc::vec![alloc::format!(
                "summary window {window} must lie in 1..={steps}"
            )]));
        }
        let tail = &rec.per_step[steps - window..];
        let final_value = tail.iter().map(|m| m.pass_rate).sum::<f64>() / window as f64;
        per_run.push(RunFinal {
            final_value,
            peak: rec.peak_pass_rate(),
        });
    }
    let finals: Vec<f64> = per_run.iter().map(|r| r.final_value).collect();
    let (mean, sd) = mean_sd(&finals)?;
    Ok(Summary { per_run, mean, sd })
}
