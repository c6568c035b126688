//! Finite-difference harness for the clipped surrogate on a small tabular
//! policy. Shared by the gradient tests and the acceptance suite.
#![allow(dead_code)]

use cliplab_core::simenv::{all_tasks, rollout, ContextOrder, EnvConfig, SoftmaxPolicy, Task};
use cliplab_core::surrogate::{token_noise, token_surrogate_frozen, SurrogateResult, TokenStep};
use cliplab_core::{ClipOperator, TrustRegion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;

pub fn small_env(order: ContextOrder) -> EnvConfig {
    EnvConfig {
        vocab_size: 5,
        max_len: 4,
        num_prompts: 2,
        context_order: order,
    }
}

pub fn random_policy(env: EnvConfig, rng: &mut ChaCha12Rng, scale: f64) -> SoftmaxPolicy {
    let n = SoftmaxPolicy::uniform(env).unwrap().params().len();
    let normal = Normal::new(0.0, scale).unwrap();
    SoftmaxPolicy::from_params(env, (0..n).map(|_| rng.sample(normal)).collect()).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

pub fn central_diff(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + h;
            let up = f(&x);
            x[i] = theta[i] - h;
            let down = f(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A batch of sampled responses with fixed old log-probabilities.
pub struct Instance {
    pub env: EnvConfig,
    pub old: SoftmaxPolicy,
    pub theta: Vec<f64>,
    pub items: Vec<(Task, Vec<u32>, f64)>,
}

impl Instance {
    pub fn draw(rng: &mut ChaCha12Rng, seq_advantages: bool) -> Self {
        let env = small_env(ContextOrder::Bigram);
        let tasks = all_tasks(1, &env).unwrap();
        let old = random_policy(env, rng, 1.0);
        let shift = Normal::new(0.0, 0.3).unwrap();
        let theta = old.params().iter().map(|p| p + rng.sample(shift)).collect();
        let items = (0..6)
            .map(|j| {
                let task = tasks[j % tasks.len()];
                let ro = rollout(&old, &task, rng);
                let adv = if seq_advantages || rng.random_bool(0.85) {
                    rng.random_range(-2.0..2.0)
                } else {
                    0.0
                };
                (task, ro.tokens, adv)
            })
            .collect();
        Self { env, old, theta, items }
    }

    pub fn batch(&self, theta: &[f64]) -> Vec<TokenStep> {
        let policy = SoftmaxPolicy::from_params(self.env, theta.to_vec()).unwrap();
        let mut out = Vec::new();
        for (id, (task, tokens, adv)) in self.items.iter().enumerate() {
            let new = policy.logprobs(task, tokens).unwrap();
            let old = self.old.logprobs(task, tokens).unwrap();
            for (pos, (n, o)) in new.iter().zip(&old).enumerate() {
                out.push(TokenStep {
                    logprob_new: *n,
                    logprob_old: *o,
                    advantage: *adv,
                    response_id: id as u32,
                    position: pos as u32,
                });
            }
        }
        out
    }

    /// Parameter gradient from per-token coefficients.
    pub fn chain(&self, res: &SurrogateResult) -> Vec<f64> {
        let policy = SoftmaxPolicy::from_params(self.env, self.theta.clone()).unwrap();
        let mut grad = vec![0.0; self.theta.len()];
        let mut offset = 0;
        for (task, tokens, _) in &self.items {
            let len = tokens.len();
            policy
                .accumulate_logprob_grad(task, tokens, &res.logprob_grad[offset..offset + len], &mut grad)
                .unwrap();
            offset += len;
        }
        grad
    }
}

/// Distance in log space from any executed or decision ratio to a bound.
pub fn near_kink(ratios: &[f64], noise: &[f64]) -> bool {
    let region = TrustRegion::DAPO;
    let bounds = [region.lower(), region.upper()];
    let tol = 1e-3;
    ratios.iter().enumerate().any(|(i, &r)| {
        let z = noise.get(i).copied().unwrap_or(1.0);
        bounds.iter().any(|&b| (r / b).ln().abs() < tol || (r * z / b).ln().abs() < tol)
    })
}

/// Outcome of [`check_token_level`].
#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub checked: u64,
    /// Instances with at least one token outside the trust region.
    pub boundary_instances: u64,
    pub max_rel_err: f64,
}

/// Compares the analytic parameter gradient of the token-level surrogate with
/// central differences (h = 1e-5) on `instances` random batches. Stochastic
/// operators use frozen noise; soft-decay weights are held fixed as
/// stop-gradient factors. Batches with a ratio within 0.1% of a bound are
/// redrawn.
pub fn check_token_level(op: ClipOperator, seed: u64, instances: u64) -> GradReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let region = TrustRegion::DAPO;
    let mut report = GradReport { checked: 0, boundary_instances: 0, max_rel_err: 0.0 };
    while report.checked < instances {
        let inst = Instance::draw(&mut rng, false);
        let batch = inst.batch(&inst.theta);
        let noise = token_noise(&op, seed ^ report.checked, &batch);
        let ratios: Vec<f64> = batch.iter().map(TokenStep::ratio).collect();
        if near_kink(&ratios, &noise) {
            continue;
        }
        let res = token_surrogate_frozen(&batch, &op, region, &noise).unwrap();
        let analytic = inst.chain(&res);
        if analytic.iter().all(|g| *g == 0.0) {
            continue;
        }
        let weights = res.per_token_weight.clone();
        let n = batch.len() as f64;
        let fd = central_diff(&inst.theta, 1e-5, |p| match op {
            ClipOperator::SoftDecay { .. } => {
                let b = inst.batch(p);
                -b.iter()
                    .zip(&weights)
                    .map(|(t, w)| w * t.ratio() * t.advantage)
                    .sum::<f64>()
                    / n
            }
            _ => token_surrogate_frozen(&inst.batch(p), &op, region, &noise).unwrap().loss,
        });
        report.max_rel_err = report.max_rel_err.max(rel_err(&analytic, &fd));
        if res.zone_counts.safe < res.active_tokens {
            report.boundary_instances += 1;
        }
        report.checked += 1;
    }
    report
}
