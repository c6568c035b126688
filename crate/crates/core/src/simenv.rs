//! Desk-scale verifiable-reward environment.
//!
//! A task is a prompt id plus a modular-arithmetic verifier. Responses are
//! token sequences over `0..vocab_size`, where the last id is the end token.
//! The policy is a table of logits indexed by `(prompt bucket, previous
//! token, next token)` (or `(prompt bucket, next token)` for order 0), so log
//! probabilities, entropies, gradients and even the exact pass probability
//! are computable in closed form.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// Highest supported difficulty.
pub const MAX_DIFFICULTY: u8 = 2;

/// Conditioning of the policy on the previous token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextOrder {
    Unigram,
    Bigram,
}

/// Shape of the environment and of the policy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvConfig {
    /// Vocabulary size including the end token; at least 3.
    pub vocab_size: u32,
    /// Maximum number of generated tokens (including the end token).
    pub max_len: usize,
    /// Number of distinct prompts; each gets its own logit table.
    pub num_prompts: u32,
    pub context_order: ContextOrder,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            max_len: 12,
            num_prompts: 8,
            context_order: ContextOrder::Bigram,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.vocab_size < 3 {
            problems.push(alloc::format!("vocab_size must be >= 3, got {}", self.vocab_size));
        }
        if self.max_len < 3 {
            problems.push(alloc::format!("max_len must be >= 3, got {}", self.max_len));
        }
        if self.num_prompts == 0 {
            problems.push("num_prompts must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Id of the end-of-sequence token.
    pub fn end_token(&self) -> u32 {
        self.vocab_size - 1
    }

    fn contexts(&self) -> usize {
        match self.context_order {
            ContextOrder::Unigram => 1,
            ContextOrder::Bigram => self.vocab_size as usize + 1,
        }
    }
}

/// One prompt with its verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Task {
    pub prompt_id: u32,
    pub difficulty: u8,
    /// Required residue of the token sum (difficulties 1 and 2).
    pub target_residue: u32,
    /// Required content length (difficulty 2).
    pub target_len: usize,
    /// Modulus of the sum check; equals the vocabulary size.
    pub modulus: u32,
    end_token: u32,
}

fn mix(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

impl Task {
    /// The task attached to a prompt. Targets are a fixed function of the
    /// prompt so that a per-prompt policy can learn them.
    pub fn for_prompt(prompt_id: u32, difficulty: u8, env: &EnvConfig) -> Result<Self> {
        if difficulty > MAX_DIFFICULTY {
            return Err(Error::Difficulty(difficulty));
        }
        env.validate()?;
        let h = mix(u64::from(prompt_id) << 8 | u64::from(difficulty));
        let modulus = env.vocab_size;
        let task = Task {
            prompt_id,
            difficulty,
            target_residue: (h % u64::from(modulus)) as u32,
            // content length in 2..=max_len-1 so the end token still fits
            target_len: 2 + ((h >> 32) % (env.max_len as u64 - 2)) as usize,
            modulus,
            end_token: env.end_token(),
        };
        debug_assert!(task.witness(env).is_some_and(|w| verify(&task, &w) == 1));
        Ok(task)
    }

    /// A response accepted by the verifier, or `None` if the task is
    /// unsatisfiable within `env.max_len`.
    pub fn witness(&self, env: &EnvConfig) -> Option<Vec<u32>> {
        let top = self.end_token - 1; // largest content token
        // Greedy fill: `count` tokens in 0..=top summing exactly to the residue.
        let fill = |count: usize| -> Vec<u32> {
            let mut left = self.target_residue;
            (0..count)
                .map(|_| {
                    let t = left.min(top);
                    left -= t;
                    t
                })
                .collect()
        };
        let content: Vec<u32> = match self.difficulty {
            0 => vec![0],
            1 => fill(self.target_residue.div_ceil(top) as usize),
            _ => fill(self.target_len),
        };
        if content.iter().sum::<u32>() != self.target_residue && self.difficulty > 0 {
            return None;
        }
        let mut tokens = content;
        if tokens.len() < env.max_len {
            tokens.push(self.end_token);
        } else if tokens.len() > env.max_len {
            return None;
        }
        Some(tokens)
    }
}

/// Samples a task: a uniformly chosen prompt at the given difficulty.
pub fn sample_task<R: Rng + ?Sized>(rng: &mut R, difficulty: u8, env: &EnvConfig) -> Result<Task> {
    let prompt_id = rng.random_range(0..env.num_prompts);
    Task::for_prompt(prompt_id, difficulty, env)
}

/// All prompts at one difficulty, in prompt order.
pub fn all_tasks(difficulty: u8, env: &EnvConfig) -> Result<Vec<Task>> {
    (0..env.num_prompts)
        .map(|p| Task::for_prompt(p, difficulty, env))
        .collect()
}

fn content<'a>(task: &Task, tokens: &'a [u32]) -> &'a [u32] {
    let end = tokens
        .iter()
        .position(|&t| t == task.end_token)
        .unwrap_or(tokens.len());
    &tokens[..end]
}

/// Binary verifier reward.
pub fn verify(task: &Task, tokens: &[u32]) -> u8 {
    let body = content(task, tokens);
    let residue = || body.iter().map(|&t| u64::from(t)).sum::<u64>() % u64::from(task.modulus);
    let ok = match task.difficulty {
        0 => body.contains(&0),
        1 => residue() == u64::from(task.target_residue),
        _ => body.len() == task.target_len && residue() == u64::from(task.target_residue),
    };
    u8::from(ok)
}

/// A sampled response and its log-probabilities under the sampling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub tokens: Vec<u32>,
    pub logprobs: Vec<f64>,
}

/// Exact per-response quantities under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEval {
    pub logprobs: Vec<f64>,
    /// Mean categorical entropy over the visited states.
    pub entropy: f64,
    /// Gradient of the summed log-probabilities, same layout as the params.
    pub grad: Vec<f64>,
}

/// Tabular softmax policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    env: EnvConfig,
    params: Vec<f64>,
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&x| libm::exp(x - max)).sum();
    let lse = max + libm::log(sum);
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

impl SoftmaxPolicy {
    /// All-zero logits (uniform next-token distribution).
    pub fn uniform(env: EnvConfig) -> Result<Self> {
        env.validate()?;
        let len = env.num_prompts as usize * env.contexts() * env.vocab_size as usize;
        Ok(Self {
            env,
            params: vec![0.0; len],
        })
    }

    pub fn from_params(env: EnvConfig, params: Vec<f64>) -> Result<Self> {
        let mut p = Self::uniform(env)?;
        if params.len() != p.params.len() {
            return Err(Error::InvalidConfig(vec![alloc::format!(
                "expected {} parameters, got {}",
                p.params.len(),
                params.len()
            )]));
        }
        p.params = params;
        Ok(p)
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of the logit row for `(prompt, previous token)`; `None` means the
    /// start-of-sequence context.
    fn row_offset(&self, prompt_id: u32, prev: Option<u32>) -> usize {
        let v = self.env.vocab_size as usize;
        let bucket = (prompt_id % self.env.num_prompts) as usize;
        let ctx = match self.env.context_order {
            ContextOrder::Unigram => 0,
            ContextOrder::Bigram => prev.map_or(v, |t| t as usize),
        };
        (bucket * self.env.contexts() + ctx) * v
    }

    fn row(&self, prompt_id: u32, prev: Option<u32>) -> &[f64] {
        let o = self.row_offset(prompt_id, prev);
        &self.params[o..o + self.env.vocab_size as usize]
    }

    /// Log-probabilities of the next token in a given context.
    pub fn next_token_logprobs(&self, prompt_id: u32, prev: Option<u32>) -> Vec<f64> {
        let mut out = vec![0.0; self.env.vocab_size as usize];
        log_softmax_row(self.row(prompt_id, prev), &mut out);
        out
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.env.vocab_size) {
            Some(&token) => Err(Error::OutOfVocab {
                token,
                vocab: self.env.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Per-token log-probabilities of a response.
    pub fn logprobs(&self, task: &Task, tokens: &[u32]) -> Result<Vec<f64>> {
        self.check_tokens(tokens)?;
        let mut row = vec![0.0; self.env.vocab_size as usize];
        let mut prev = None;
        Ok(tokens
            .iter()
            .map(|&t| {
                log_softmax_row(self.row(task.prompt_id, prev), &mut row);
                prev = Some(t);
                row[t as usize]
            })
            .collect())
    }

    /// Adds `sum_t weights[t] * d logpi(token_t) / d params` into `grad`.
    pub fn accumulate_logprob_grad(
        &self,
        task: &Task,
        tokens: &[u32],
        weights: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_tokens(tokens)?;
        debug_assert_eq!(tokens.len(), weights.len());
        debug_assert_eq!(grad.len(), self.params.len());
        let v = self.env.vocab_size as usize;
        let mut logp = vec![0.0; v];
        let mut prev = None;
        for (&t, &w) in tokens.iter().zip(weights) {
            let o = self.row_offset(task.prompt_id, prev);
            prev = Some(t);
            if w == 0.0 {
                continue;
            }
            log_softmax_row(&self.params[o..o + v], &mut logp);
            for (j, lp) in logp.iter().enumerate() {
                grad[o + j] -= w * libm::exp(*lp);
            }
            grad[o + t as usize] += w;
        }
        Ok(())
    }

    /// Exact log-probabilities, mean entropy and gradient of the summed
    /// log-probabilities.
    pub fn eval(&self, task: &Task, tokens: &[u32]) -> Result<PolicyEval> {
        let logprobs = self.logprobs(task, tokens)?;
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_logprob_grad(task, tokens, &vec![1.0; tokens.len()], &mut grad)?;
        let entropy = self.mean_entropy(task, tokens)?;
        Ok(PolicyEval {
            logprobs,
            entropy,
            grad,
        })
    }

    /// Mean next-token entropy over the states visited by `tokens`.
    pub fn mean_entropy(&self, task: &Task, tokens: &[u32]) -> Result<f64> {
        self.check_tokens(tokens)?;
        if tokens.is_empty() {
            return Ok(0.0);
        }
        let mut logp = vec![0.0; self.env.vocab_size as usize];
        let mut prev = None;
        let mut total = 0.0;
        for &t in tokens {
            log_softmax_row(self.row(task.prompt_id, prev), &mut logp);
            total -= logp.iter().map(|&lp| libm::exp(lp) * lp).sum::<f64>();
            prev = Some(t);
        }
        Ok(total / tokens.len() as f64)
    }

    /// Plain gradient-descent step `params -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= learning_rate * g;
        }
    }

    /// Exact probability that a sampled response passes the verifier,
    /// by dynamic programming over (context, partial sum, saw-zero).
    pub fn pass_probability(&self, task: &Task) -> f64 {
        let v = self.env.vocab_size as usize;
        let m = task.modulus as usize;
        let end = task.end_token as usize;
        let ctxs = v + 1; // previous token or start
        let idx = |ctx: usize, sum: usize, zero: usize| (ctx * m + sum) * 2 + zero;
        let mut mass = vec![0.0f64; ctxs * m * 2];
        mass[idx(v, 0, 0)] = 1.0;
        let accept = |len: usize, sum: usize, zero: usize| match task.difficulty {
            0 => zero == 1,
            1 => sum == task.target_residue as usize,
            _ => len == task.target_len && sum == task.target_residue as usize,
        };
        let mut logp = vec![0.0; v];
        let mut passed = 0.0;
        for len in 0..self.env.max_len {
            let mut next = vec![0.0f64; mass.len()];
            for ctx in 0..ctxs {
                let prev = (ctx < v).then_some(ctx as u32);
                log_softmax_row(self.row(task.prompt_id, prev), &mut logp);
                for sum in 0..m {
                    for zero in 0..2 {
                        let p = mass[idx(ctx, sum, zero)];
                        if p == 0.0 {
                            continue;
                        }
                        for (tok, &lp) in logp.iter().enumerate() {
                            let q = p * libm::exp(lp);
                            if tok == end {
                                if accept(len, sum, zero) {
                                    passed += q;
                                }
                            } else {
                                let z = zero | usize::from(tok == 0);
                                next[idx(tok, (sum + tok) % m, z)] += q;
                            }
                        }
                    }
                }
            }
            mass = next;
        }
        // responses that hit max_len without an end token
        for ctx in 0..ctxs {
            for sum in 0..m {
                for zero in 0..2 {
                    if accept(self.env.max_len, sum, zero) {
                        passed += mass[idx(ctx, sum, zero)];
                    }
                }
            }
        }
        passed
    }
}

/// Samples one response autoregressively.
pub fn rollout<R: Rng + ?Sized>(policy: &SoftmaxPolicy, task: &Task, rng: &mut R) -> Rollout {
    let v = policy.env.vocab_size as usize;
    let mut logp = vec![0.0; v];
    let mut tokens = Vec::with_capacity(policy.env.max_len);
    let mut logprobs = Vec::with_capacity(policy.env.max_len);
    let mut prev = None;
    for _ in 0..policy.env.max_len {
        log_softmax_row(policy.row(task.prompt_id, prev), &mut logp);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut pick = None;
        for (j, &lp) in logp.iter().enumerate() {
            let p = libm::exp(lp);
            if p > 0.0 {
                pick = Some(j);
                cum += p;
                if u < cum {
                    break;
                }
            }
        }
        let tok = pick.expect("a softmax row has positive mass") as u32;
        tokens.push(tok);
        logprobs.push(logp[tok as usize]);
        if tok == task.end_token {
            break;
        }
        prev = Some(tok);
    }
    Rollout { tokens, logprobs }
}

/// Mean exact pass probability over every prompt at `difficulty`.
pub fn mean_pass_probability(policy: &SoftmaxPolicy, difficulty: u8) -> Result<f64> {
    let tasks = all_tasks(difficulty, &policy.env)?;
    let total: f64 = tasks.iter().map(|t| policy.pass_probability(t)).sum();
    Ok(total / tasks.len() as f64)
}
