//! Group-sampling training loop and the experiment-matrix runner.
//!
//! One outer step:
//!
//! 1. snapshot the sampling policy `pi_old`;
//! 2. draw `tasks_per_step` tasks and a group of `G` responses for each,
//!    resampling whole groups until rewards are mixed (dynamic sampling);
//! 3. compute group-relative advantages (degenerate groups are skipped);
//! 4. run `inner_epochs` passes of surrogate + SGD against the fixed snapshot,
//!    which is what makes ratios leave 1 after the first pass.
//!
//! Every random quantity comes from a keyed substream, so a run is a pure
//! function of its [`TrainConfig`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::advantage::{group_advantage, perturb_advantage, AdvantageMode, RolloutGroup};
use crate::error::{Error, Result};
use crate::metrics::{summarize, RunRecord, StepMetrics, Summary, ZoneCounts};
use crate::ratio_ops::{ClipOperator, TrustRegion};
use crate::rng::{derive_seed, substream, tag};
use crate::simenv::{
    mean_pass_probability, rollout, sample_task, verify, EnvConfig, SoftmaxPolicy, Task,
    MAX_DIFFICULTY,
};
use crate::surrogate::{surrogate, Granularity, TokenStep};

/// Default trailing window for run finals.
pub const DEFAULT_SUMMARY_WINDOW: usize = 10;

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub operator: ClipOperator,
    pub region: TrustRegion,
    pub group_size: usize,
    pub tasks_per_step: usize,
    pub inner_epochs: u32,
    pub learning_rate: f64,
    pub steps: u64,
    pub seed: u64,
    pub advantage_mode: AdvantageMode,
    /// Half-width of multiplicative advantage noise, if any.
    pub advantage_noise: Option<f64>,
    pub granularity: Granularity,
    pub dynamic_sampling: bool,
    pub max_resample: u32,
    pub difficulty: u8,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            operator: ClipOperator::Hard,
            region: TrustRegion::DAPO,
            group_size: 8,
            tasks_per_step: 32,
            inner_epochs: 4,
            learning_rate: 5.0,
            steps: 300,
            seed: 0,
            advantage_mode: AdvantageMode::Normalized,
            advantage_noise: None,
            granularity: Granularity::TokenLevel,
            dynamic_sampling: true,
            max_resample: 20,
            difficulty: 1,
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut note = |r: Result<()>| {
            if let Err(e) = r {
                match e {
                    Error::InvalidConfig(list) => problems.extend(list),
                    other => problems.push(format!("{other}")),
                }
            }
        };
        note(self.operator.validate());
        note(TrustRegion::new(self.region.eps_low(), self.region.eps_high()).map(|_| ()));
        note(self.env.validate());
        if self.group_size < 2 {
            problems.push(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if self.tasks_per_step == 0 {
            problems.push("tasks_per_step must be positive".into());
        }
        if self.inner_epochs == 0 {
            problems.push("inner_epochs must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.steps == 0 {
            problems.push("steps must be positive".into());
        }
        if let Some(hw) = self.advantage_noise {
            if !(0.0..1.0).contains(&hw) {
                problems.push(format!("advantage_noise must lie in [0, 1), got {hw}"));
            }
        }
        if self.difficulty > MAX_DIFFICULTY {
            problems.push(format!(
                "difficulty must be at most {MAX_DIFFICULTY}, got {}",
                self.difficulty
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Hex SHA-256 of the configuration's debug representation.
    pub fn config_hash(&self) -> String {
        hex_digest(format!("{self:?}").as_bytes())
    }
}

/// Lowercase hex SHA-256.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Result of [`dynamic_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGroup {
    pub group: RolloutGroup,
    /// Rewards are all equal even after resampling.
    pub degenerate: bool,
    /// Number of groups drawn (1 if the first was mixed).
    pub attempts: u32,
}

/// Draws groups of `g` responses until one has mixed rewards, at most
/// `1 + max_resample` times. Member `j` of attempt `a` uses the stream
/// `(seed, path..., a, j)`.
pub fn dynamic_sample(
    policy: &SoftmaxPolicy,
    task: &Task,
    g: usize,
    seed: u64,
    path: &[u64],
    max_resample: u32,
) -> Result<SampledGroup> {
    if g < 2 {
        return Err(Error::InvalidGroup(format!(
            "group size must be at least 2, got {g}"
        )));
    }
    let mut key: Vec<u64> = path.to_vec();
    key.extend([0, 0]);
    let n = key.len();
    let mut attempt = 0u32;
    loop {
        key[n - 2] = u64::from(attempt);
        let mut responses = Vec::with_capacity(g);
        let mut rewards = Vec::with_capacity(g);
        for j in 0..g {
            key[n - 1] = j as u64;
            let ro = rollout(policy, task, &mut substream(seed, &key));
            rewards.push(f64::from(verify(task, &ro.tokens)));
            responses.push(ro);
        }
        let group = RolloutGroup::new(task.prompt_id, responses, rewards)?;
        attempt += 1;
        let degenerate = group.is_degenerate();
        if !degenerate || attempt > max_resample {
            return Ok(SampledGroup {
                group,
                degenerate,
                attempts: attempt,
            });
        }
    }
}

/// Per-response data kept across inner epochs.
struct Prepared<'a> {
    task: &'a Task,
    tokens: &'a [u32],
    old_logprobs: Vec<f64>,
    advantage: f64,
}

/// Runs a full training job.
pub fn train(config: &TrainConfig) -> Result<RunRecord> {
    train_with(config, |_| Ok(()))
}

/// Runs a training job and passes every step's metrics to `observer` as soon
/// as the step finishes. An observer error aborts the run.
pub fn train_with<F>(config: &TrainConfig, mut observer: F) -> Result<RunRecord>
where
    F: FnMut(&StepMetrics) -> core::result::Result<(), String>,
{
    config.validate()?;
    let seed = config.seed;
    let mut policy = SoftmaxPolicy::uniform(config.env)?;
    let initial_pass_rate = mean_pass_probability(&policy, config.difficulty)?;
    let max_resample = if config.dynamic_sampling {
        config.max_resample
    } else {
        0
    };
    let mut per_step = Vec::with_capacity(config.steps as usize);
    let mut run_active = 0u64;
    let mut run_clipped = 0u64;
    let mut run_flips = 0u64;

    for step in 0..config.steps {
        let old = policy.clone();
        let tasks = (0..config.tasks_per_step)
            .map(|i| {
                let mut rng = substream(seed, &[tag::TASK, step, i as u64]);
                sample_task(&mut rng, config.difficulty, &config.env)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut groups = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            groups.push(dynamic_sample(
                &old,
                task,
                config.group_size,
                seed,
                &[tag::ROLLOUT, step, i as u64],
                max_resample,
            )?);
        }

        let mut reward_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut length_sum = 0usize;
        let mut responses = 0usize;
        let mut degenerate_groups = 0u64;
        let mut prepared = Vec::new();
        for (i, (task, sampled)) in tasks.iter().zip(&groups).enumerate() {
            let group = &sampled.group;
            for (ro, r) in group.responses().iter().zip(group.rewards()) {
                reward_sum += r;
                entropy_sum += old.mean_entropy(task, &ro.tokens)?;
                length_sum += ro.tokens.len();
                responses += 1;
            }
            if sampled.degenerate {
                degenerate_groups += 1;
                continue;
            }
            let mut adv = group_advantage(group, config.advantage_mode)?;
            if let Some(hw) = config.advantage_noise {
                let mut rng = substream(seed, &[tag::ADVANTAGE_NOISE, step, i as u64]);
                adv = perturb_advantage(&adv, hw, &mut rng)?;
            }
            for (ro, &a) in group.responses().iter().zip(&adv.values) {
                prepared.push(Prepared {
                    task,
                    tokens: &ro.tokens,
                    old_logprobs: old.logprobs(task, &ro.tokens)?,
                    advantage: a,
                });
            }
        }

        let mut zones = ZoneCounts::default();
        let mut step_active = 0u64;
        let mut step_clipped = 0u64;
        if !prepared.is_empty() {
            for epoch in 0..config.inner_epochs {
                let mut batch = Vec::new();
                for (id, p) in prepared.iter().enumerate() {
                    let new = policy.logprobs(p.task, p.tokens)?;
                    for (pos, (&lp_new, &lp_old)) in new.iter().zip(&p.old_logprobs).enumerate() {
                        batch.push(TokenStep {
                            logprob_new: lp_new,
                            logprob_old: lp_old,
                            advantage: p.advantage,
                            response_id: id as u32,
                            position: pos as u32,
                        });
                    }
                }
                let epoch_seed = derive_seed(seed, &[tag::EPOCH, step, u64::from(epoch)]);
                let res = surrogate(
                    config.granularity,
                    &batch,
                    &config.operator,
                    config.region,
                    epoch_seed,
                )?;
                if !res.loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        epoch,
                        diagnostic: format!(
                            "loss {} over {} tokens; clip fraction {}; zones {:?}",
                            res.loss,
                            batch.len(),
                            res.clip_fraction,
                            res.zone_counts
                        ),
                    });
                }
                let mut grad = vec![0.0; policy.params().len()];
                let mut offset = 0;
                for p in &prepared {
                    let len = p.tokens.len();
                    policy.accumulate_logprob_grad(
                        p.task,
                        p.tokens,
                        &res.logprob_grad[offset..offset + len],
                        &mut grad,
                    )?;
                    offset += len;
                }
                policy.sgd_step(&grad, config.learning_rate);
                zones.merge(&res.zone_counts);
                step_active += res.active_tokens;
                step_clipped += res.clipped_tokens;
                run_flips += res.decision_flips;
            }
        }
        run_active += step_active;
        run_clipped += step_clipped;

        let metrics = StepMetrics {
            step,
            mean_reward: reward_sum / responses as f64,
            pass_rate: mean_pass_probability(&policy, config.difficulty)?,
            clip_fraction: ratio(step_clipped, step_active),
            zone_counts: zones,
            entropy: entropy_sum / responses as f64,
            mean_length: length_sum as f64 / responses as f64,
            degenerate_groups,
        };
        log::debug!(
            "step {step}: pass {:.4} clip {:.4}",
            metrics.pass_rate,
            metrics.clip_fraction
        );
        observer(&metrics).map_err(Error::Observer)?;
        per_step.push(metrics);
    }

    let final_pass_rate = per_step.last().map_or(initial_pass_rate, |m| m.pass_rate);
    Ok(RunRecord {
        config_hash: config.config_hash(),
        per_step,
        initial_pass_rate,
        final_pass_rate,
        mean_clip_fraction: ratio(run_clipped, run_active),
        flip_rate: ratio(run_flips, run_active),
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One config evaluated over every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub label: String,
    pub config: TrainConfig,
    /// One entry per seed, in seed order.
    pub runs: Vec<(u64, Result<RunRecord>)>,
    /// Summary over the successful runs, if any.
    pub summary: Option<Summary>,
}

/// Rows in config order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixResult {
    pub rows: Vec<MatrixRow>,
    pub window: usize,
}

/// The `(config, seed)` cells of a matrix, config-major.
pub fn matrix_cells(configs: &[TrainConfig], seeds: &[u64]) -> Result<Vec<TrainConfig>> {
    if configs.is_empty() {
        return Err(Error::Empty("config list"));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    Ok(configs
        .iter()
        .flat_map(|c| {
            seeds.iter().map(move |&s| TrainConfig {
                seed: s,
                ..c.clone()
            })
        })
        .collect())
}

/// Builds the matrix from per-cell results given in [`matrix_cells`] order.
pub fn assemble_matrix(
    configs: &[TrainConfig],
    seeds: &[u64],
    mut results: Vec<Result<RunRecord>>,
    window: usize,
) -> Result<MatrixResult> {
    if results.len() != configs.len() * seeds.len() {
        return Err(Error::InvalidConfig(vec![format!(
            "expected {} matrix cells, got {}",
            configs.len() * seeds.len(),
            results.len()
        )]));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs.iter().rev() {
        let tail = results.split_off(results.len() - seeds.len());
        let runs: Vec<_> = seeds.iter().copied().zip(tail).collect();
        let ok: Vec<RunRecord> = runs
            .iter()
            .filter_map(|(_, r)| r.as_ref().ok().cloned())
            .collect();
        let summary = if ok.is_empty() {
            None
        } else {
            Some(summarize(&ok, window)?)
        };
        rows.push(MatrixRow {
            label: config.operator.label(),
            config: config.clone(),
            runs,
            summary,
        });
    }
    rows.reverse();
    Ok(MatrixResult { rows, window })
}

/// Runs every `(config, seed)` pair sequentially. Cell failures are kept in
/// the result rather than aborting the matrix.
pub fn run_matrix(configs: &[TrainConfig], seeds: &[u64], window: usize) -> Result<MatrixResult> {
    let results = matrix_cells(configs, seeds)?.iter().map(train).collect();
    assemble_matrix(configs, seeds, results, window)
}

/// The ablation operators in table order: hard clipping, binary admission,
/// soft decay with `k = 2, 3, 4`, stochastic rescue.
pub fn ablation_operators(delta: f64) -> Vec<ClipOperator> {
    vec![
        ClipOperator::Hard,
        ClipOperator::BinaryAdmission { delta },
        ClipOperator::SoftDecay { k: 2 },
        ClipOperator::SoftDecay { k: 3 },
        ClipOperator::SoftDecay { k: 4 },
        ClipOperator::Nsr { delta },
    ]
}
