//! Clipped surrogate objectives over token batches.
//!
//! The objective is written in gate form: each nonzero-advantage token gets
//! an [`OperatorOutcome`] and contributes `w * r~ * A` when its gradient
//! flows, or the detached constant `r~ * A` when it is gated. For hard
//! clipping this equals the usual `min(r A, clip(r) A)` in every sign/side
//! case. Gradients treat the operator decision and weight as constants and
//! move `r~` multiplicatively with the policy, so
//! `d loss / d logpi_new = -w * A * r~ / N` for every admitted token.
//!
//! The library exposes a loss to *minimize*: `loss = -objective`.
//!
//! Token granularity averages over all tokens in the batch. Sequence
//! granularity uses one length-normalized ratio per response and averages
//! over responses.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::metrics::ZoneCounts;
use crate::ratio_ops::{AdvantageSign, ClipOperator, OperatorOutcome, TrustRegion};
use crate::rng::substream;

/// Stream key used for the per-response draw at sequence granularity.
const SEQUENCE_POSITION: u64 = u64::MAX;

/// One token's contribution to the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenStep {
    pub logprob_new: f64,
    pub logprob_old: f64,
    pub advantage: f64,
    pub response_id: u32,
    pub position: u32,
}

impl TokenStep {
    /// `pi_new / pi_old`.
    pub fn ratio(&self) -> f64 {
        libm::exp(self.logprob_new - self.logprob_old)
    }

    fn check(&self) -> Result<()> {
        if self.logprob_new.is_finite() && self.logprob_old.is_finite() && !self.advantage.is_nan() {
            Ok(())
        } else {
            Err(Error::NonFiniteLogprob {
                response_id: self.response_id,
                position: self.position,
            })
        }
    }
}

/// Ratio granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    TokenLevel,
    SequenceLevel,
}

/// Loss, per-token gradient coefficients and clipping diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateResult {
    /// Negated objective.
    pub loss: f64,
    /// Operator gradient weight per token (0 for gated or zero-advantage tokens).
    pub per_token_weight: Vec<f64>,
    /// `d loss / d logprob_new` per token.
    pub logprob_grad: Vec<f64>,
    pub clip_fraction: f64,
    pub zone_counts: ZoneCounts,
    /// Tokens with nonzero advantage.
    pub active_tokens: u64,
    /// Active tokens whose gradient weight is zero.
    pub clipped_tokens: u64,
    /// Active tokens whose decision mask differs from hard clipping of the
    /// clean ratio.
    pub decision_flips: u64,
    /// Active tokens whose ratio differs from exactly 1.
    pub off_policy_tokens: u64,
}

struct Accumulator {
    objective: f64,
    weights: Vec<f64>,
    grads: Vec<f64>,
    zones: ZoneCounts,
    active: u64,
    clipped: u64,
    flips: u64,
    off_policy: u64,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self {
            objective: 0.0,
            weights: vec![0.0; len],
            grads: vec![0.0; len],
            zones: ZoneCounts::default(),
            active: 0,
            clipped: 0,
            flips: 0,
            off_policy: 0,
        }
    }

    /// Records `out` for tokens `idx`, each with gradient scale `scale`.
    fn record(
        &mut self,
        idx: Range<usize>,
        r: f64,
        advantage: f64,
        out: &OperatorOutcome,
        clean_mask: bool,
        scale: f64,
    ) {
        let n = idx.len() as u64;
        self.active += n;
        self.zones.add(out.zone, n);
        if out.decision_mask != clean_mask {
            self.flips += n;
        }
        if r != 1.0 {
            self.off_policy += n;
        }
        let w = out.gradient_weight;
        if w > 0.0 {
            self.objective += w * out.effective_ratio * advantage * scale * n as f64;
            for i in idx {
                self.weights[i] = w;
                self.grads[i] = -w * advantage * out.effective_ratio * scale;
            }
        } else {
            self.clipped += n;
            self.objective += out.effective_ratio * advantage * scale * n as f64;
        }
    }

    fn finish(self) -> SurrogateResult {
        SurrogateResult {
            loss: -self.objective,
            per_token_weight: self.weights,
            logprob_grad: self.grads,
            clip_fraction: if self.active == 0 {
                0.0
            } else {
                self.clipped as f64 / self.active as f64
            },
            zone_counts: self.zones,
            active_tokens: self.active,
            clipped_tokens: self.clipped,
            decision_flips: self.flips,
            off_policy_tokens: self.off_policy,
        }
    }
}

fn check_noise(op: &ClipOperator, noise: &[f64], expected: usize) -> Result<()> {
    if op.is_stochastic() && noise.len() != expected {
        return Err(Error::NoiseLength {
            expected,
            got: noise.len(),
        });
    }
    Ok(())
}

/// Per-token perturbations for one forward pass. Each token draws from its
/// own stream `(step_seed, response_id, position)`; deterministic operators
/// get 1.0 without drawing.
pub fn token_noise(op: &ClipOperator, step_seed: u64, batch: &[TokenStep]) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            let mut rng = substream(step_seed, &[u64::from(t.response_id), u64::from(t.position)]);
            op.draw(&mut rng).unwrap_or(1.0)
        })
        .collect()
}

/// Token-level surrogate with operator noise drawn from per-token streams.
pub fn token_surrogate(
    batch: &[TokenStep],
    op: &ClipOperator,
    region: TrustRegion,
    step_seed: u64,
) -> Result<SurrogateResult> {
    let noise = if op.is_stochastic() {
        token_noise(op, step_seed, batch)
    } else {
        Vec::new()
    };
    token_surrogate_frozen(batch, op, region, &noise)
}

/// Token-level surrogate with explicit per-token perturbations (ignored, and
/// may be empty, for deterministic operators).
pub fn token_surrogate_frozen(
    batch: &[TokenStep],
    op: &ClipOperator,
    region: TrustRegion,
    noise: &[f64],
) -> Result<SurrogateResult> {
    op.validate()?;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    check_noise(op, noise, batch.len())?;
    let scale = 1.0 / batch.len() as f64;
    let mut acc = Accumulator::new(batch.len());
    for (i, t) in batch.iter().enumerate() {
        t.check()?;
        let Some(sign) = AdvantageSign::of(t.advantage) else {
            continue;
        };
        let interval = region.interval(sign);
        let r = t.ratio();
        let z = noise.get(i).copied().unwrap_or(1.0);
        let out = op.apply_with_z(r, &interval, z)?;
        acc.record(i..i + 1, r, t.advantage, &out, interval.contains(r), scale);
    }
    Ok(acc.finish())
}

/// Length-normalized sequence ratio `exp(mean_t (logpi_new - logpi_old))`.
pub fn sequence_ratio(steps: &[TokenStep]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::Empty("response"));
    }
    let total: f64 = steps.iter().map(|t| t.logprob_new - t.logprob_old).sum();
    Ok(libm::exp(total / steps.len() as f64))
}

/// Contiguous runs of equal `response_id`.
pub fn response_spans(batch: &[TokenStep]) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=batch.len() {
        if i == batch.len() || batch[i].response_id != batch[start].response_id {
            spans.push(start..i);
            start = i;
        }
    }
    spans
}

/// One perturbation per response, from stream `(step_seed, response_id, MAX)`.
pub fn sequence_noise(op: &ClipOperator, step_seed: u64, batch: &[TokenStep]) -> Vec<f64> {
    response_spans(batch)
        .into_iter()
        .map(|span| {
            let id = u64::from(batch[span.start].response_id);
            let mut rng = substream(step_seed, &[id, SEQUENCE_POSITION]);
            op.draw(&mut rng).unwrap_or(1.0)
        })
        .collect()
}

/// Sequence-level surrogate: one ratio, decision and draw per response.
pub fn sequence_surrogate(
    batch: &[TokenStep],
    op: &ClipOperator,
    region: TrustRegion,
    step_seed: u64,
) -> Result<SurrogateResult> {
    let noise = if op.is_stochastic() {
        sequence_noise(op, step_seed, batch)
    } else {
        Vec::new()
    };
    sequence_surrogate_frozen(batch, op, region, &noise)
}

/// Sequence-level surrogate with one explicit perturbation per response.
pub fn sequence_surrogate_frozen(
    batch: &[TokenStep],
    op: &ClipOperator,
    region: TrustRegion,
    noise: &[f64],
) -> Result<SurrogateResult> {
    op.validate()?;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let spans = response_spans(batch);
    check_noise(op, noise, spans.len())?;
    let per_response = 1.0 / spans.len() as f64;
    let mut acc = Accumulator::new(batch.len());
    for (k, span) in spans.into_iter().enumerate() {
        let steps = &batch[span.clone()];
        for t in steps {
            t.check()?;
        }
        let advantage = steps[0].advantage;
        if steps.iter().any(|t| t.advantage != advantage) {
            return Err(Error::MixedAdvantage(steps[0].response_id));
        }
        let Some(sign) = AdvantageSign::of(advantage) else {
            continue;
        };
        let interval = region.interval(sign);
        let s = sequence_ratio(steps)?;
        let z = noise.get(k).copied().unwrap_or(1.0);
        let out = op.apply_with_z(s, &interval, z)?;
        // every token of the response carries 1/(G L) of the response's term
        let scale = per_response / steps.len() as f64;
        acc.record(span, s, advantage, &out, interval.contains(s), scale);
    }
    Ok(acc.finish())
}

/// Dispatches on granularity.
pub fn surrogate(
    granularity: Granularity,
    batch: &[TokenStep],
    op: &ClipOperator,
    region: TrustRegion,
    step_seed: u64,
) -> Result<SurrogateResult> {
    match granularity {
        Granularity::TokenLevel => token_surrogate(batch, op, region, step_seed),
        Granularity::SequenceLevel => sequence_surrogate(batch, op, region, step_seed),
    }
}
