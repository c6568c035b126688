//! Expectation-level behaviour of near-boundary stochastic rescue.
//!
//! For a ratio `r` outside the region, rescue yields the random effective
//! ratio `min(r z, u)` (upper side) or `max(r z, l)` (lower side) with
//! `z ~ U(1 - delta, 1 + delta)`. This module gives the closed-form mean
//! `f(r)`, its derivative `g(r)`, the admission probability, and a sharded
//! Monte Carlo estimator that drives the operator from [`crate::ratio_ops`]
//! directly, so that the closed forms can be checked against the code that
//! actually runs during training.
//!
//! Upper side, `a = 1 - delta`, `b = 1 + delta`:
//!
//! ```text
//! f(r) = r                                          r <= u
//!      = (u b - u^2 / (2 r) - a^2 r / 2) / (2 delta)   u < r < u / a
//!      = u                                          r >= u / a
//! g(r) = (u^2 / r^2 - a^2) / (4 delta)              in the rescue zone
//! ```
//!
//! Lower side (admission event `r z >= l`):
//!
//! ```text
//! f(r) = r                                          r >= l
//!      = (l^2 / (2 r) - l a + b^2 r / 2) / (2 delta)   l / b < r < l
//!      = l                                          r <= l / b
//! g(r) = (b^2 - l^2 / r^2) / (4 delta)              in the rescue zone
//! ```
//!
//! `f` is continuous at the outer breakpoint but jumps at the bound itself:
//! just outside the region half of the draws are rescued at a ratio strictly
//! inside it, so `f(u+) = u (1 - delta / 4)` while `f(u) = u` (and
//! `f(l-) = l (1 + delta / 4)`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::ratio_ops::{nsr_rescue_with_z, AdmissibleInterval, Bound, Zone};
use crate::rng::{substream, tag, uniform_around_one};

/// Active bound and rescue window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescueProfile {
    side: Bound,
    bound_value: f64,
    delta: f64,
}

impl RescueProfile {
    pub fn new(side: Bound, bound_value: f64, delta: f64) -> Result<Self> {
        if !(bound_value.is_finite() && bound_value > 0.0) {
            return Err(Error::OutOfRange {
                name: "bound",
                range: "(0, inf)",
                value: bound_value,
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::OutOfRange {
                name: "delta",
                range: "(0, 1)",
                value: delta,
            });
        }
        Ok(Self {
            side,
            bound_value,
            delta,
        })
    }

    /// Upper-bound profile with `u`.
    pub fn upper(u: f64, delta: f64) -> Result<Self> {
        Self::new(Bound::Upper, u, delta)
    }

    /// Lower-bound profile with `l`.
    pub fn lower(l: f64, delta: f64) -> Result<Self> {
        Self::new(Bound::Lower, l, delta)
    }

    pub fn side(&self) -> Bound {
        self.side
    }

    pub fn bound_value(&self) -> f64 {
        self.bound_value
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Open rescue zone `(u, u/(1-delta))` or `(l/(1+delta), l)`.
    pub fn rescue_zone(&self) -> (f64, f64) {
        let b = self.bound_value;
        match self.side {
            Bound::Upper => (b, b / (1.0 - self.delta)),
            Bound::Lower => (b / (1.0 + self.delta), b),
        }
    }

    /// The admissible interval this profile describes.
    pub fn interval(&self) -> AdmissibleInterval {
        match self.side {
            Bound::Upper => AdmissibleInterval::upper_bounded(self.bound_value),
            Bound::Lower => AdmissibleInterval::lower_bounded(self.bound_value),
        }
    }

    fn in_region(&self, r: f64) -> bool {
        self.interval().contains(r)
    }

    fn in_rescue_zone(&self, r: f64) -> bool {
        let (lo, hi) = self.rescue_zone();
        lo < r && r < hi
    }
}

/// Which one-sided limit to report at a breakpoint of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    FromBelow,
    FromAbove,
}

fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRatio(r))
    }
}

// Rescue-zone expressions. The lower-side forms equal the upper-side ones
// under (r, bound, delta) -> (-r, -bound, -delta) with the sign of f flipped;
// the tests check this directly.
fn upper_zone_f(r: f64, u: f64, delta: f64) -> f64 {
    let a = 1.0 - delta;
    (u * (1.0 + delta) - u * u / (2.0 * r) - a * a * r / 2.0) / (2.0 * delta)
}

fn upper_zone_g(r: f64, u: f64, delta: f64) -> f64 {
    let a = 1.0 - delta;
    (u * u / (r * r) - a * a) / (4.0 * delta)
}

fn lower_zone_f(r: f64, l: f64, delta: f64) -> f64 {
    let b = 1.0 + delta;
    (l * l / (2.0 * r) - l * (1.0 - delta) + b * b * r / 2.0) / (2.0 * delta)
}

fn lower_zone_g(r: f64, l: f64, delta: f64) -> f64 {
    let b = 1.0 + delta;
    (b * b - l * l / (r * r)) / (4.0 * delta)
}

/// Expected effective ratio `f(r) = E_z[r~(r)]`.
pub fn expected_ratio(r: f64, profile: &RescueProfile) -> Result<f64> {
    check_ratio(r)?;
    let (b, d) = (profile.bound_value, profile.delta);
    Ok(if profile.in_region(r) {
        r
    } else if profile.in_rescue_zone(r) {
        match profile.side {
            Bound::Upper => upper_zone_f(r, b, d),
            Bound::Lower => lower_zone_f(r, b, d),
        }
    } else {
        b
    })
}

/// Expected gradient `g(r) = f'(r)`. `approach` selects the one-sided limit
/// at the two breakpoints and is ignored elsewhere.
pub fn expected_gradient(r: f64, profile: &RescueProfile, approach: Approach) -> Result<f64> {
    check_ratio(r)?;
    let (b, d) = (profile.bound_value, profile.delta);
    let (lo, hi) = profile.rescue_zone();
    let g = match profile.side {
        Bound::Upper => {
            if r < lo || (r == lo && approach == Approach::FromBelow) {
                1.0
            } else if r == lo || r < hi {
                upper_zone_g(r, b, d)
            } else if r == hi && approach == Approach::FromBelow {
                // the zone formula vanishes at the outer breakpoint
                upper_zone_g(r, b, d).max(0.0)
            } else {
                0.0
            }
        }
        Bound::Lower => {
            if r > hi || (r == hi && approach == Approach::FromAbove) {
                1.0
            } else if r == hi || r > lo {
                lower_zone_g(r, b, d)
            } else if r == lo && approach == Approach::FromAbove {
                lower_zone_g(r, b, d).max(0.0)
            } else {
                0.0
            }
        }
    };
    Ok(g)
}

/// Probability that a token at ratio `r` keeps a gradient: 1 in the region,
/// the admission probability outside it.
pub fn rescue_probability(r: f64, profile: &RescueProfile) -> f64 {
    if profile.in_region(r) {
        return 1.0;
    }
    let (b, d) = (profile.bound_value, profile.delta);
    let p = match profile.side {
        Bound::Upper => (b / r - (1.0 - d)) / (2.0 * d),
        Bound::Lower => ((1.0 + d) - b / r) / (2.0 * d),
    };
    p.clamp(0.0, 1.0)
}

/// Draws per Monte Carlo shard. Fixed so that results do not depend on how
/// shards are distributed over workers.
pub const MC_SHARD_SIZE: u64 = 1 << 16;

/// Smallest accepted sample count for [`mc_estimate`].
pub const MC_MIN_SAMPLES: u64 = 1_000;

/// Running mean/variance of the effective ratio and of its pathwise
/// derivative `dr~/dr`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    grad_mean: f64,
    grad_m2: f64,
}

impl McAccumulator {
    pub fn push(&mut self, value: f64, grad: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dv = value - self.mean;
        self.mean += dv / n;
        self.m2 += dv * (value - self.mean);
        let dg = grad - self.grad_mean;
        self.grad_mean += dg / n;
        self.grad_m2 += dg * (grad - self.grad_mean);
    }

    /// Combines two accumulators (pairwise update).
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dv = other.mean - self.mean;
        let dg = other.grad_mean - self.grad_mean;
        Self {
            count: self.count + other.count,
            mean: self.mean + dv * nb / n,
            m2: self.m2 + other.m2 + dv * dv * na * nb / n,
            grad_mean: self.grad_mean + dg * nb / n,
            grad_m2: self.grad_m2 + other.grad_m2 + dg * dg * na * nb / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> McEstimate {
        let n = self.count as f64;
        let se = |m2: f64| {
            if self.count < 2 {
                0.0
            } else {
                libm::sqrt(m2 / (n - 1.0) / n)
            }
        };
        McEstimate {
            mean: self.mean,
            stderr: se(self.m2),
            grad_mean: self.grad_mean,
            grad_stderr: se(self.grad_m2),
            samples: self.count,
        }
    }
}

/// Monte Carlo estimate of `f(r)` and `g(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Mean of the pathwise derivative `z 1{admitted}` (1 in the region).
    pub grad_mean: f64,
    pub grad_stderr: f64,
    pub samples: u64,
}

/// One sample: the operator outcome for a given `z` and its derivative with
/// respect to `r`.
fn sample_point<R: Rng + ?Sized>(
    r: f64,
    profile: &RescueProfile,
    interval: &AdmissibleInterval,
    rng: &mut R,
) -> (f64, f64) {
    let z = uniform_around_one(rng, profile.delta);
    // Parameters were validated when the profile was built.
    let out = nsr_rescue_with_z(r, interval, profile.delta, z)
        .expect("validated ratio and window");
    let grad = match out.zone {
        Zone::Safe => 1.0,
        _ => z * out.gradient_weight,
    };
    (out.effective_ratio, grad)
}

/// `(shard index, draws)` pairs covering `n` samples.
pub fn mc_shard_plan(n: u64) -> impl Iterator<Item = (u64, u64)> {
    let full = n / MC_SHARD_SIZE;
    let rest = n % MC_SHARD_SIZE;
    (0..full)
        .map(|s| (s, MC_SHARD_SIZE))
        .chain((rest > 0).then_some((full, rest)))
}

/// Runs one shard. Each shard owns the stream `(seed, MONTE_CARLO, shard)`.
pub fn mc_shard(
    r: f64,
    profile: &RescueProfile,
    seed: u64,
    shard: u64,
    draws: u64,
) -> Result<McAccumulator> {
    check_ratio(r)?;
    let interval = profile.interval();
    let mut rng = substream(seed, &[tag::MONTE_CARLO, shard]);
    let mut acc = McAccumulator::default();
    for _ in 0..draws {
        let (v, g) = sample_point(r, profile, &interval, &mut rng);
        acc.push(v, g);
    }
    Ok(acc)
}

/// Merges shard accumulators in shard order.
pub fn mc_merge<'a, I: IntoIterator<Item = &'a McAccumulator>>(shards: I) -> McAccumulator {
    shards
        .into_iter()
        .fold(McAccumulator::default(), |acc, s| acc.merge(s))
}

/// Monte Carlo estimate of the effective ratio and its gradient with `n`
/// draws, deterministic in `seed`.
pub fn mc_estimate(r: f64, profile: &RescueProfile, n: u64, seed: u64) -> Result<McEstimate> {
    if n < MC_MIN_SAMPLES {
        return Err(Error::TooFewSamples(n));
    }
    check_ratio(r)?;
    let mut acc = McAccumulator::default();
    for (shard, draws) in mc_shard_plan(n) {
        acc = acc.merge(&mc_shard(r, profile, seed, shard, draws)?);
    }
    Ok(acc.finish())
}
