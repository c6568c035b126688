//! Group-relative advantages.
//!
//! Advantages are per response and broadcast to every token of it. The
//! normalized form uses the population standard deviation and refuses
//! degenerate (all-equal) groups instead of flooring sigma.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::uniform_around_one;
use crate::simenv::Rollout;

/// `G` verified responses to one task.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    task_id: u32,
    responses: Vec<Rollout>,
    rewards: Vec<f64>,
}

impl RolloutGroup {
    /// Requires `G >= 2` responses with one reward each.
    pub fn new(task_id: u32, responses: Vec<Rollout>, rewards: Vec<f64>) -> Result<Self> {
        if responses.len() != rewards.len() {
            return Err(Error::InvalidGroup(alloc::format!(
                "{} responses but {} rewards",
                responses.len(),
                rewards.len()
            )));
        }
        if rewards.len() < 2 {
            return Err(Error::InvalidGroup(alloc::format!(
                "group size must be at least 2, got {}",
                rewards.len()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidGroup(alloc::format!("non-finite reward {r}")));
        }
        Ok(Self {
            task_id,
            responses,
            rewards,
        })
    }

    pub fn task_id(&self) -> u32 {
        self.task_id
    }

    pub fn responses(&self) -> &[Rollout] {
        &self.responses
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn group_size(&self) -> usize {
        self.rewards.len()
    }

    /// All rewards equal: no learning signal under relative advantages.
    pub fn is_degenerate(&self) -> bool {
        self.rewards.windows(2).all(|w| w[0] == w[1])
    }
}

/// How advantages are computed from rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvantageMode {
    /// `(R - mean) / std` within the group.
    Normalized,
    /// Reward 1 maps to +1, anything else to -1.
    RawBinary,
}

/// Provenance of an advantage vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvantageKind {
    Normalized,
    RawBinary,
    NoiseScaled,
}

/// Per-response advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub kind: AdvantageKind,
}

/// Group-relative advantages for one group.
pub fn group_advantage(group: &RolloutGroup, mode: AdvantageMode) -> Result<AdvantageVector> {
    let rewards = group.rewards();
    match mode {
        AdvantageMode::Normalized => {
            let n = rewards.len() as f64;
            let mean = rewards.iter().sum::<f64>() / n;
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            if sd == 0.0 {
                return Err(Error::DegenerateGroup(rewards.len()));
            }
            Ok(AdvantageVector {
                values: rewards.iter().map(|r| (r - mean) / sd).collect(),
                kind: AdvantageKind::Normalized,
            })
        }
        AdvantageMode::RawBinary => Ok(AdvantageVector {
            values: rewards
                .iter()
                .map(|&r| if r == 1.0 { 1.0 } else { -1.0 })
                .collect(),
            kind: AdvantageKind::RawBinary,
        }),
    }
}

/// Multiplies every advantage by an independent `z ~ U(1 - hw, 1 + hw)`.
/// `half_width = 0` is the identity. One draw per entry.
pub fn perturb_advantage<R: Rng + ?Sized>(
    adv: &AdvantageVector,
    half_width: f64,
    rng: &mut R,
) -> Result<AdvantageVector> {
    if !(0.0..1.0).contains(&half_width) {
        return Err(Error::OutOfRange {
            name: "advantage noise half_width",
            range: "[0, 1)",
            value: half_width,
        });
    }
    Ok(AdvantageVector {
        values: adv
            .values
            .iter()
            .map(|&a| a * uniform_around_one(rng, half_width))
            .collect(),
        kind: AdvantageKind::NoiseScaled,
    })
}
