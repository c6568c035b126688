use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Importance ratios must be finite and strictly positive.
    #[error("importance ratio must be finite and positive, got {0}")]
    InvalidRatio(f64),
    /// Rescue window or noise half-width outside its admissible range.
    #[error("{name} must lie in {range}, got {value}")]
    OutOfRange {
        /// Parameter name.
        name: &'static str,
        /// Human-readable admissible range.
        range: &'static str,
        /// Offending value.
        value: f64,
    },
    #[error("invalid trust region: {0}")]
    /// Invalid clip bounds.
    InvalidRegion(String),
    /// All rewards in a group are equal, so the normalized advantage is undefined.
    #[error("degenerate group: all {0} rewards are equal")]
    DegenerateGroup(usize),
    /// Group shape violation (size < 2 or mismatched lengths).
    #[error("invalid rollout group: {0}")]
    InvalidGroup(String),
    /// A surrogate batch or response was empty.
    #[error("empty {0}")]
    Empty(&'static str),
    /// A log-probability was NaN or infinite.
    #[error("non-finite log-probability at response {response_id}, position {position}")]
    NonFiniteLogprob {
        /// Response identifier of the offending token.
        response_id: u32,
        /// Position inside the response.
        position: u32,
    },
    /// Tokens of one response carried different advantages.
    #[error("response {0} has non-constant advantage")]
    MixedAdvantage(u32),
    /// Noise values supplied to a frozen evaluation do not match the batch.
    #[error("expected {expected} noise values, got {got}")]
    NoiseLength {
        /// Required length.
        expected: usize,
        /// Supplied length.
        got: usize,
    },
    /// Token id outside the policy vocabulary.
    #[error("token {token} outside vocabulary of size {vocab}")]
    OutOfVocab {
        /// Offending token.
        token: u32,
        /// Vocabulary size.
        vocab: u32,
    },
    /// Unsupported task difficulty.
    #[error("unsupported difficulty {0} (supported: 0..=2)")]
    Difficulty(u8),
    /// Too few Monte Carlo samples.
    #[error("monte carlo sample count {0} is below the minimum of 1000")]
    TooFewSamples(u64),
    /// One or more configuration fields are invalid; every problem is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    /// The surrogate loss became NaN or infinite during training.
    #[error("non-finite loss at step {step}, epoch {epoch}: {diagnostic}")]
    NonFiniteLoss {
        /// Outer step.
        step: u64,
        /// Inner epoch.
        epoch: u32,
        /// Summary of the offending batch.
        diagnostic: String,
    },
    /// The per-step observer asked the trainer to stop.
    #[error("metrics observer failed: {0}")]
    Observer(String),
    /// Aggregation over an empty set of runs.
    #[error("no runs to summarize")]
    NoRuns,
}

/// Result alias for this crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;
