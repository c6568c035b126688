//! Trust regions and boundary operators on importance ratios.
//!
//! Every operator maps a ratio `r`, the advantage-dependent admissible
//! interval and (for the stochastic ones) a perturbation `z` to an
//! [`OperatorOutcome`]: the effective ratio used in the objective, the weight
//! applied to the unclipped per-token gradient, the decision mask computed
//! from the clean ratio, and the zone label of the `(r_dec, r_exec)` pair.
//!
//! Stochastic operators come in two flavours. The `*_with_z` functions take
//! the perturbation explicitly (used for frozen-noise gradient checks); the
//! RNG flavours draw exactly one uniform per call, including for in-bound
//! ratios, so swapping operators never shifts a seeded stream.

use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::uniform_around_one;

/// Default rescue window for token-level rescue.
pub const DEFAULT_DELTA: f64 = 0.1;
/// Default rescue window for sequence-level rescue.
pub const DEFAULT_SEQUENCE_DELTA: f64 = 0.001;
/// Default half-width of the diagnostic probe noise, `z ~ U(0.8, 1.2)`.
pub const DEFAULT_PROBE_HALF_WIDTH: f64 = 0.2;

/// Asymmetric clip bounds `(1 - eps_low, 1 + eps_high)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegion {
    eps_low: f64,
    eps_high: f64,
}

impl TrustRegion {
    /// DAPO clip-higher bounds, `eps_low = 0.2`, `eps_high = 0.28`.
    pub const DAPO: TrustRegion = TrustRegion {
        eps_low: 0.2,
        eps_high: 0.28,
    };

    /// Builds a region; `eps_low` must lie in `[0, 1)` and `eps_high` must be
    /// finite and non-negative.
    pub fn new(eps_low: f64, eps_high: f64) -> Result<Self> {
        if !(eps_low.is_finite() && (0.0..1.0).contains(&eps_low)) {
            return Err(Error::InvalidRegion(alloc::format!(
                "eps_low must lie in [0, 1), got {eps_low}"
            )));
        }
        if !(eps_high.is_finite() && eps_high >= 0.0) {
            return Err(Error::InvalidRegion(alloc::format!(
                "eps_high must be finite and non-negative, got {eps_high}"
            )));
        }
        Ok(Self { eps_low, eps_high })
    }

    pub fn eps_low(&self) -> f64 {
        self.eps_low
    }

    pub fn eps_high(&self) -> f64 {
        self.eps_high
    }

    /// Lower bound `l = 1 - eps_low`.
    pub fn lower(&self) -> f64 {
        1.0 - self.eps_low
    }

    /// Upper bound `u = 1 + eps_high`.
    pub fn upper(&self) -> f64 {
        1.0 + self.eps_high
    }

    /// Admissible interval for the given advantage sign.
    pub fn interval(&self, sign: AdvantageSign) -> AdmissibleInterval {
        trust_interval(sign, *self)
    }
}

impl Default for TrustRegion {
    fn default() -> Self {
        Self::DAPO
    }
}

/// Sign of a nonzero advantage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvantageSign {
    Positive,
    Negative,
}

impl AdvantageSign {
    /// `None` for a zero (or NaN) advantage: such tokens carry no gradient and
    /// never reach an operator.
    pub fn of(advantage: f64) -> Option<Self> {
        if advantage > 0.0 {
            Some(Self::Positive)
        } else if advantage < 0.0 {
            Some(Self::Negative)
        } else {
            None
        }
    }
}

/// Which side of the trust region is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bound {
    Upper,
    Lower,
}

/// One-sided admissible interval: `(-inf, u]` for positive advantages,
/// `[l, +inf)` for negative ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleInterval {
    lower: f64,
    upper: f64,
    active: Bound,
    bound_value: f64,
}

impl AdmissibleInterval {
    /// `(-inf, u]`.
    pub fn upper_bounded(u: f64) -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: u,
            active: Bound::Upper,
            bound_value: u,
        }
    }

    /// `[l, +inf)`.
    pub fn lower_bounded(l: f64) -> Self {
        Self {
            lower: l,
            upper: f64::INFINITY,
            active: Bound::Lower,
            bound_value: l,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn active_bound(&self) -> Bound {
        self.active
    }

    /// The finite endpoint.
    pub fn bound_value(&self) -> f64 {
        self.bound_value
    }

    /// Closed-interval membership.
    #[inline]
    pub fn contains(&self, r: f64) -> bool {
        self.lower <= r && r <= self.upper
    }
}

/// Advantage-dependent trust region.
pub fn trust_interval(sign: AdvantageSign, region: TrustRegion) -> AdmissibleInterval {
    match sign {
        AdvantageSign::Positive => AdmissibleInterval::upper_bounded(region.upper()),
        AdvantageSign::Negative => AdmissibleInterval::lower_bounded(region.lower()),
    }
}

/// Classification of a token update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    /// Decision and execution ratios both in bounds.
    Safe,
    /// Decision out of bounds, execution pulled back in.
    Rescued,
    /// Decision in bounds, execution pushed out.
    PushedOut,
    /// Both out of bounds.
    DeepViolation,
    /// Rescue attempted and failed; hard-clip fallback.
    ClippedFallback,
}

impl Zone {
    /// All zones in reporting order.
    pub const ALL: [Zone; 5] = [
        Zone::Safe,
        Zone::Rescued,
        Zone::PushedOut,
        Zone::DeepViolation,
        Zone::ClippedFallback,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Zone::Safe => "Safe",
            Zone::Rescued => "Rescued",
            Zone::PushedOut => "PushedOut",
            Zone::DeepViolation => "DeepViolation",
            Zone::ClippedFallback => "ClippedFallback",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of applying an operator to one ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOutcome {
    /// Effective ratio `r~` entering the objective. For detached tokens this is
    /// the clip bound and is reported for logging only.
    pub effective_ratio: f64,
    /// Multiplier on the unclipped per-token gradient; 0 means detached.
    pub gradient_weight: f64,
    pub zone: Zone,
    /// Clip-mask verdict of the decision ratio.
    pub decision_mask: bool,
}

impl OperatorOutcome {
    fn pass(r: f64) -> Self {
        Self {
            effective_ratio: r,
            gradient_weight: 1.0,
            zone: Zone::Safe,
            decision_mask: true,
        }
    }

    fn gated(bound: f64, zone: Zone) -> Self {
        Self {
            effective_ratio: bound,
            gradient_weight: 0.0,
            zone,
            decision_mask: false,
        }
    }

    /// True when the gradient is gated to zero.
    pub fn is_clipped(&self) -> bool {
        self.gradient_weight == 0.0
    }
}

/// Decision/execution perturbation mode for the diagnostic probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeMode {
    /// `r_dec = r_exec = r z`: the noise can flip the mask.
    Coupled,
    /// `r_dec = r`, `r_exec = r z`: mask from the clean ratio.
    Decoupled,
    /// Decoupled only for rescue-zone pairs, hard clipping otherwise.
    OnlyRescue,
    /// Decoupled only for push-out pairs, hard clipping otherwise.
    OnlyPushOut,
}

impl ProbeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeMode::Coupled => "coupled",
            ProbeMode::Decoupled => "decoupled",
            ProbeMode::OnlyRescue => "only-rescue",
            ProbeMode::OnlyPushOut => "only-push-out",
        }
    }
}

/// Boundary behaviour selected for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipOperator {
    Hard,
    /// Near-boundary stochastic rescue with window `delta`.
    Nsr { delta: f64 },
    /// Stochastic admission test, admitted tokens executed at the bound.
    BinaryAdmission { delta: f64 },
    /// Deterministic out-of-bound weight `(u/r)^k` (or `(r/l)^k`).
    SoftDecay { k: u32 },
    /// Decision/execution noise probe.
    NoiseProbe { mode: ProbeMode, half_width: f64 },
}

impl ClipOperator {
    /// Validates the operator parameters.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClipOperator::Hard => Ok(()),
            ClipOperator::Nsr { delta } | ClipOperator::BinaryAdmission { delta } => {
                check_window("delta", delta)
            }
            ClipOperator::SoftDecay { k } => check_exponent(k),
            ClipOperator::NoiseProbe { half_width, .. } => check_window("half_width", half_width),
        }
    }

    /// Whether the operator consumes a perturbation draw.
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, ClipOperator::Hard | ClipOperator::SoftDecay { .. })
    }

    /// Half-width of the perturbation `z`, if any.
    pub fn noise_half_width(&self) -> Option<f64> {
        match *self {
            ClipOperator::Nsr { delta } | ClipOperator::BinaryAdmission { delta } => Some(delta),
            ClipOperator::NoiseProbe { half_width, .. } => Some(half_width),
            _ => None,
        }
    }

    /// Draws the perturbation for one application (one uniform), or `None`
    /// for deterministic operators (no draw).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        self.noise_half_width()
            .map(|hw| uniform_around_one(rng, hw))
    }

    /// Applies the operator, drawing its perturbation from `rng`.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        r: f64,
        interval: &AdmissibleInterval,
        rng: &mut R,
    ) -> Result<OperatorOutcome> {
        self.validate()?;
        let z = self.draw(rng).unwrap_or(1.0);
        self.apply_with_z(r, interval, z)
    }

    /// Applies the operator with a frozen perturbation `z` (ignored by the
    /// deterministic operators).
    pub fn apply_with_z(
        &self,
        r: f64,
        interval: &AdmissibleInterval,
        z: f64,
    ) -> Result<OperatorOutcome> {
        match *self {
            ClipOperator::Hard => hard_clip(r, interval),
            ClipOperator::Nsr { delta } => nsr_rescue_with_z(r, interval, delta, z),
            ClipOperator::BinaryAdmission { delta } => {
                binary_admission_with_z(r, interval, delta, z)
            }
            ClipOperator::SoftDecay { k } => soft_decay(r, interval, k),
            ClipOperator::NoiseProbe { mode, half_width } => {
                noise_probe_with_z(r, interval, mode, half_width, z)
            }
        }
    }

    /// Short label used in tables and file names.
    pub fn label(&self) -> alloc::string::String {
        match *self {
            ClipOperator::Hard => "hard".into(),
            ClipOperator::Nsr { .. } => "nsr".into(),
            ClipOperator::BinaryAdmission { .. } => "binary".into(),
            ClipOperator::SoftDecay { k } => alloc::format!("soft-decay-k{k}"),
            ClipOperator::NoiseProbe { mode, .. } => alloc::format!("probe-{}", mode.as_str()),
        }
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRatio(r))
    }
}

fn check_window(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            range: "(0, 1)",
            value,
        })
    }
}

fn check_exponent(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::OutOfRange {
            name: "k",
            range: "positive integers",
            value: 0.0,
        });
    }
    if !(2..=4).contains(&k) {
        log::warn!("soft decay exponent k = {k} is outside the studied set {{2, 3, 4}}");
    }
    Ok(())
}

/// Zone of a `(r_dec, r_exec)` pair.
pub fn classify_zone(r_dec: f64, r_exec: f64, interval: &AdmissibleInterval) -> Zone {
    match (interval.contains(r_dec), interval.contains(r_exec)) {
        (true, true) => Zone::Safe,
        (false, true) => Zone::Rescued,
        (true, false) => Zone::PushedOut,
        (false, false) => Zone::DeepViolation,
    }
}

/// Hard clipping: identity in bounds, clamped and detached outside.
pub fn hard_clip(r: f64, interval: &AdmissibleInterval) -> Result<OperatorOutcome> {
    check_ratio(r)?;
    Ok(if interval.contains(r) {
        OperatorOutcome::pass(r)
    } else {
        OperatorOutcome::gated(interval.bound_value(), Zone::DeepViolation)
    })
}

/// Near-boundary stochastic rescue with a frozen perturbation `z`.
pub fn nsr_rescue_with_z(
    r: f64,
    interval: &AdmissibleInterval,
    delta: f64,
    z: f64,
) -> Result<OperatorOutcome> {
    check_ratio(r)?;
    check_window("delta", delta)?;
    if interval.contains(r) {
        return Ok(OperatorOutcome::pass(r));
    }
    let exec = r * z;
    Ok(if interval.contains(exec) {
        OperatorOutcome {
            effective_ratio: exec,
            gradient_weight: 1.0,
            zone: Zone::Rescued,
            decision_mask: false,
        }
    } else {
        OperatorOutcome::gated(interval.bound_value(), Zone::ClippedFallback)
    })
}

/// Near-boundary stochastic rescue, `z ~ U(1 - delta, 1 + delta)`.
pub fn nsr_rescue<R: Rng + ?Sized>(
    r: f64,
    interval: &AdmissibleInterval,
    delta: f64,
    rng: &mut R,
) -> Result<OperatorOutcome> {
    check_window("delta", delta)?;
    let z = uniform_around_one(rng, delta);
    nsr_rescue_with_z(r, interval, delta, z)
}

/// Binary admission with a frozen perturbation: same admission test as
/// rescue, but admitted tokens execute at the bound.
pub fn binary_admission_with_z(
    r: f64,
    interval: &AdmissibleInterval,
    delta: f64,
    z: f64,
) -> Result<OperatorOutcome> {
    let mut out = nsr_rescue_with_z(r, interval, delta, z)?;
    if out.zone == Zone::Rescued {
        out.effective_ratio = interval.bound_value();
    }
    Ok(out)
}

/// Binary admission, `z ~ U(1 - delta, 1 + delta)`.
pub fn binary_admission<R: Rng + ?Sized>(
    r: f64,
    interval: &AdmissibleInterval,
    delta: f64,
    rng: &mut R,
) -> Result<OperatorOutcome> {
    check_window("delta", delta)?;
    let z = uniform_around_one(rng, delta);
    binary_admission_with_z(r, interval, delta, z)
}

/// Deterministic soft decay. Out-of-bound tokens keep `r~ = r` and are
/// weighted by `(u/r)^k` above the region or `(r/l)^k` below it.
pub fn soft_decay(r: f64, interval: &AdmissibleInterval, k: u32) -> Result<OperatorOutcome> {
    check_ratio(r)?;
    check_exponent(k)?;
    if interval.contains(r) {
        return Ok(OperatorOutcome::pass(r));
    }
    let b = interval.bound_value();
    let base = match interval.active_bound() {
        Bound::Upper => b / r,
        Bound::Lower => r / b,
    };
    Ok(OperatorOutcome {
        effective_ratio: r,
        gradient_weight: libm::pow(base, f64::from(k)),
        zone: Zone::DeepViolation,
        decision_mask: false,
    })
}

/// Noise probe with a frozen perturbation `z`.
pub fn noise_probe_with_z(
    r: f64,
    interval: &AdmissibleInterval,
    mode: ProbeMode,
    half_width: f64,
    z: f64,
) -> Result<OperatorOutcome> {
    check_ratio(r)?;
    check_window("half_width", half_width)?;
    let exec = r * z;
    let decoupled = || {
        let zone = classify_zone(r, exec, interval);
        let mut out = if zone == Zone::DeepViolation {
            OperatorOutcome::gated(interval.bound_value(), zone)
        } else {
            OperatorOutcome {
                effective_ratio: exec,
                gradient_weight: 1.0,
                zone,
                decision_mask: true,
            }
        };
        out.decision_mask = interval.contains(r);
        out
    };
    Ok(match mode {
        ProbeMode::Coupled => {
            if interval.contains(exec) {
                OperatorOutcome::pass(exec)
            } else {
                OperatorOutcome::gated(interval.bound_value(), Zone::DeepViolation)
            }
        }
        ProbeMode::Decoupled => decoupled(),
        ProbeMode::OnlyRescue => match classify_zone(r, exec, interval) {
            Zone::Rescued => decoupled(),
            _ => hard_clip(r, interval)?,
        },
        ProbeMode::OnlyPushOut => match classify_zone(r, exec, interval) {
            Zone::PushedOut => decoupled(),
            _ => hard_clip(r, interval)?,
        },
    })
}

/// Noise probe, `z ~ U(1 - half_width, 1 + half_width)`.
pub fn noise_probe<R: Rng + ?Sized>(
    r: f64,
    interval: &AdmissibleInterval,
    mode: ProbeMode,
    half_width: f64,
    rng: &mut R,
) -> Result<OperatorOutcome> {
    check_window("half_width", half_width)?;
    let z = uniform_around_one(rng, half_width);
    noise_probe_with_z(r, interval, mode, half_width, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn dapo_upper() -> AdmissibleInterval {
        TrustRegion::DAPO.interval(AdvantageSign::Positive)
    }

    fn dapo_lower() -> AdmissibleInterval {
        TrustRegion::DAPO.interval(AdvantageSign::Negative)
    }

    #[test]
    fn intervals_follow_advantage_sign() {
        let up = dapo_upper();
        assert_eq!(up.lower(), f64::NEG_INFINITY);
        assert_eq!(up.upper(), 1.28);
        assert_eq!(up.active_bound(), Bound::Upper);
        assert_eq!(up.bound_value(), 1.28);

        let lo = dapo_lower();
        assert_eq!(lo.lower(), 0.8);
        assert_eq!(lo.upper(), f64::INFINITY);
        assert_eq!(lo.active_bound(), Bound::Lower);
        assert_eq!(lo.bound_value(), 0.8);

        let degenerate = TrustRegion::new(0.0, 0.0)
            .unwrap()
            .interval(AdvantageSign::Positive);
        assert_eq!(degenerate.bound_value(), 1.0);
        assert!(degenerate.contains(1.0));
        assert!(!degenerate.contains(1.0 + 1e-15));
    }

    #[test]
    fn region_validation() {
        assert!(TrustRegion::new(1.0, 0.2).is_err());
        assert!(TrustRegion::new(-0.1, 0.2).is_err());
        assert!(TrustRegion::new(0.2, -0.1).is_err());
        assert!(TrustRegion::new(0.2, f64::NAN).is_err());
        assert_eq!(AdvantageSign::of(0.0), None);
        assert_eq!(AdvantageSign::of(-0.0), None);
        assert_eq!(AdvantageSign::of(f64::NAN), None);
    }

    #[test]
    fn hard_clip_examples() {
        let up = dapo_upper();
        assert_eq!(hard_clip(1.0, &up).unwrap(), OperatorOutcome::pass(1.0));
        let out = hard_clip(1.5, &up).unwrap();
        assert_eq!(out.effective_ratio, 1.28);
        assert_eq!(out.gradient_weight, 0.0);
        assert_eq!(out.zone, Zone::DeepViolation);
        let out = hard_clip(0.7, &dapo_lower()).unwrap();
        assert_eq!(out.effective_ratio, 0.8);
        assert_eq!(out.gradient_weight, 0.0);
        assert_eq!(out.zone, Zone::DeepViolation);
    }

    #[test]
    fn non_positive_ratio_rejected() {
        let up = dapo_upper();
        let mut rng = substream(0, &[]);
        assert_eq!(hard_clip(0.0, &up), Err(Error::InvalidRatio(0.0)));
        assert!(hard_clip(-1.0, &up).is_err());
        assert!(hard_clip(f64::NAN, &up).is_err());
        assert!(nsr_rescue(0.0, &up, 0.1, &mut rng).is_err());
        assert!(soft_decay(-2.0, &up, 2).is_err());
        assert!(noise_probe(0.0, &up, ProbeMode::Coupled, 0.2, &mut rng).is_err());
    }

    #[test]
    fn window_validation() {
        let up = dapo_upper();
        let mut rng = substream(0, &[]);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(nsr_rescue(1.1, &up, bad, &mut rng).is_err());
            assert!(binary_admission(1.1, &up, bad, &mut rng).is_err());
            assert!(noise_probe(1.1, &up, ProbeMode::Decoupled, bad, &mut rng).is_err());
        }
        assert!(ClipOperator::SoftDecay { k: 0 }.validate().is_err());
        assert!(ClipOperator::SoftDecay { k: 7 }.validate().is_ok());
    }

    #[test]
    fn nsr_cases() {
        let up = dapo_upper();
        // case 1: in bounds, whatever z
        for z in [0.9, 1.0, 1.0999] {
            assert_eq!(
                nsr_rescue_with_z(1.1, &up, 0.1, z).unwrap(),
                OperatorOutcome::pass(1.1)
            );
        }
        // case 2: 1.30 * 0.95 = 1.235 <= 1.28
        let out = nsr_rescue_with_z(1.30, &up, 0.1, 0.95).unwrap();
        assert_eq!(out.zone, Zone::Rescued);
        assert_eq!(out.effective_ratio, 1.30 * 0.95);
        assert_eq!(out.gradient_weight, 1.0);
        assert!(!out.decision_mask);
        // case 3
        let out = nsr_rescue_with_z(1.30, &up, 0.1, 1.05).unwrap();
        assert_eq!(out.zone, Zone::ClippedFallback);
        assert_eq!(out.effective_ratio, 1.28);
        assert_eq!(out.gradient_weight, 0.0);
        // lower side: 0.75 * 1.08 = 0.81 >= 0.8
        let out = nsr_rescue_with_z(0.75, &dapo_lower(), 0.1, 1.08).unwrap();
        assert_eq!(out.zone, Zone::Rescued);
        let out = nsr_rescue_with_z(0.75, &dapo_lower(), 0.1, 1.0).unwrap();
        assert_eq!(out.zone, Zone::ClippedFallback);
        assert_eq!(out.effective_ratio, 0.8);
    }

    #[test]
    fn nsr_deep_violation_never_rescued_at_window_edge() {
        // r (1 - delta) > u: the smallest possible z cannot bring r back.
        let up = dapo_upper();
        let out = nsr_rescue_with_z(1.5, &up, 0.1, 0.9).unwrap();
        assert_eq!(out.zone, Zone::ClippedFallback);
        let out = nsr_rescue_with_z(0.7, &dapo_lower(), 0.1, 1.1).unwrap();
        assert_eq!(out.zone, Zone::ClippedFallback);
    }

    #[test]
    fn binary_admission_executes_at_bound() {
        let up = dapo_upper();
        assert_eq!(
            binary_admission_with_z(1.0, &up, 0.1, 0.91).unwrap(),
            OperatorOutcome::pass(1.0)
        );
        let out = binary_admission_with_z(1.30, &up, 0.1, 0.95).unwrap();
        assert_eq!(out.effective_ratio, 1.28);
        assert_eq!(out.gradient_weight, 1.0);
        assert_eq!(out.zone, Zone::Rescued);
        let out = binary_admission_with_z(1.5, &up, 0.1, 0.9).unwrap();
        assert_eq!(out.gradient_weight, 0.0);
    }

    #[test]
    fn soft_decay_examples() {
        let up = dapo_upper();
        assert_eq!(soft_decay(1.28, &up, 3).unwrap().gradient_weight, 1.0);
        assert_close!(soft_decay(2.56, &up, 2).unwrap().gradient_weight, 0.25, 1e-15);
        let out = soft_decay(0.4, &dapo_lower(), 3).unwrap();
        assert_close!(out.gradient_weight, 0.125, 1e-15);
        assert_eq!(out.effective_ratio, 0.4);
    }

    #[test]
    fn probe_examples() {
        let up = dapo_upper();
        let out = noise_probe_with_z(1.0, &up, ProbeMode::Decoupled, 0.2, 1.1).unwrap();
        assert!(out.decision_mask);
        assert_eq!(out.effective_ratio, 1.0 * 1.1);
        assert_eq!(out.zone, Zone::Safe);

        let out = noise_probe_with_z(1.25, &up, ProbeMode::Coupled, 0.2, 1.1).unwrap();
        assert!(!out.decision_mask);
        assert_eq!(out.gradient_weight, 0.0);

        let out = noise_probe_with_z(1.25, &up, ProbeMode::OnlyPushOut, 0.2, 1.15).unwrap();
        assert!(out.decision_mask);
        assert_eq!(out.gradient_weight, 1.0);
        assert_close!(out.effective_ratio, 1.4375, 1e-12);
        assert_eq!(out.zone, Zone::PushedOut);

        // Only-rescue falls back to hard clipping for push-out pairs.
        let out = noise_probe_with_z(1.25, &up, ProbeMode::OnlyRescue, 0.2, 1.15).unwrap();
        assert_eq!(out, OperatorOutcome::pass(1.25));
        // ... and rescues rescue-zone pairs.
        let out = noise_probe_with_z(1.30, &up, ProbeMode::OnlyRescue, 0.2, 0.9).unwrap();
        assert_eq!(out.zone, Zone::Rescued);
        assert_eq!(out.gradient_weight, 1.0);
        assert!(!out.decision_mask);
        // Only-push-out hard clips a rescue-zone pair.
        let out = noise_probe_with_z(1.30, &up, ProbeMode::OnlyPushOut, 0.2, 0.9).unwrap();
        assert_eq!(out.zone, Zone::DeepViolation);
        assert_eq!(out.gradient_weight, 0.0);
    }

    #[test]
    fn zone_examples() {
        let up = dapo_upper();
        assert_eq!(classify_zone(1.30, 1.25, &up), Zone::Rescued);
        assert_eq!(classify_zone(1.25, 1.30, &up), Zone::PushedOut);
        assert_eq!(classify_zone(1.0, 1.1, &up), Zone::Safe);
        assert_eq!(classify_zone(1.4, 1.3, &up), Zone::DeepViolation);
        assert_eq!(classify_zone(0.75, 0.85, &dapo_lower()), Zone::Rescued);
    }

    #[test]
    fn stochastic_operators_draw_exactly_once() {
        let up = dapo_upper();
        for op in [
            ClipOperator::Nsr { delta: 0.1 },
            ClipOperator::BinaryAdmission { delta: 0.1 },
            ClipOperator::NoiseProbe {
                mode: ProbeMode::Coupled,
                half_width: 0.2,
            },
        ] {
            for r in [1.0, 1.3, 2.0] {
                let mut a = substream(3, &[]);
                let mut b = substream(3, &[]);
                op.apply(r, &up, &mut a).unwrap();
                let _: f64 = b.random();
                assert_eq!(a.random::<u64>(), b.random::<u64>());
            }
        }
        let mut a = substream(3, &[]);
        let mut b = substream(3, &[]);
        ClipOperator::Hard.apply(2.0, &up, &mut a).unwrap();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn labels() {
        assert_eq!(ClipOperator::SoftDecay { k: 3 }.label(), "soft-decay-k3");
        assert_eq!(
            ClipOperator::NoiseProbe {
                mode: ProbeMode::OnlyRescue,
                half_width: 0.2
            }
            .label(),
            "probe-only-rescue"
        );
    }
}
