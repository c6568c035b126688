//! TOML configuration, flag overrides and resolution to validated settings.
//!
//! Resolution order for every key: command-line flag, then config file, then
//! the built-in default. Seeds additionally fall back to `CLIPLAB_SEED`
//! before the default.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use cliplab_core::advantage::AdvantageMode;
use cliplab_core::ratio_ops::{
    DEFAULT_DELTA, DEFAULT_PROBE_HALF_WIDTH, DEFAULT_SEQUENCE_DELTA,
};
use cliplab_core::simenv::{ContextOrder, EnvConfig};
use cliplab_core::surrogate::Granularity;
use cliplab_core::trainer::{TrainConfig, DEFAULT_SUMMARY_WINDOW};
use cliplab_core::{ClipOperator, ProbeMode, TrustRegion};

use crate::error::CliError;

pub const SEED_ENV: &str = "CLIPLAB_SEED";

/// Every config key: `(key, default, note)`. Rendered into `--help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("operator.kind", "hard", "hard | nsr | binary | soft-decay | probe"),
    ("operator.delta", "0.1 (0.001 at sequence granularity)", "rescue window; method default"),
    ("operator.k", "2", "soft-decay exponent"),
    ("operator.probe_mode", "coupled", "coupled | decoupled | only-rescue | only-push-out"),
    ("operator.half_width", "0.2", "probe noise half-width"),
    ("region.eps_low", "0.2", "DAPO lower clip range"),
    ("region.eps_high", "0.28", "DAPO upper clip range"),
    ("train.steps", "required for `train`; 300 for `ablate`", "outer steps"),
    ("train.seed", "$CLIPLAB_SEED, else 0", "root seed"),
    ("train.group_size", "8", "responses per task (desk scale)"),
    ("train.tasks_per_step", "32", "tasks per step (desk scale)"),
    ("train.inner_epochs", "4", "update passes per sampled batch"),
    ("train.learning_rate", "5.0", "plain SGD step size, calibrated for the tabular policy"),
    ("train.advantage_mode", "normalized", "normalized | raw-binary"),
    ("train.advantage_noise", "unset", "half-width of multiplicative advantage noise"),
    ("train.granularity", "token", "token | sequence"),
    ("train.dynamic_sampling", "true", "resample groups until rewards are mixed"),
    ("train.max_resample", "20", "resampling budget per task"),
    ("train.difficulty", "1", "0: contains 0; 1: sum residue; 2: sum residue and length"),
    ("train.vocab_size", "16", "vocabulary size including the end token"),
    ("train.max_len", "12", "maximum response length"),
    ("train.num_prompts", "8", "distinct prompts"),
    ("train.context_order", "bigram", "bigram | unigram policy conditioning"),
    ("train.window", "10 (capped at steps)", "trailing window for run finals"),
    ("analyze.u", "1.28", "upper bound 1 + eps_high"),
    ("analyze.l", "0.8", "lower bound 1 - eps_low"),
    ("analyze.delta", "0.1", "rescue window"),
    ("analyze.grid", "200", "rows per curve"),
    ("analyze.upper_min", "1.0", "upper curve r range start"),
    ("analyze.upper_max", "1.6", "upper curve r range end"),
    ("analyze.lower_min", "0.5", "lower curve r range start"),
    ("analyze.lower_max", "1.1", "lower curve r range end"),
    ("analyze.mc_samples", "0", "Monte Carlo draws per row (0 disables)"),
    ("analyze.seed", "$CLIPLAB_SEED, else 0", "Monte Carlo seed"),
    ("zones.samples", "10000", "points per side"),
    ("zones.distribution", "lognormal", "lognormal | uniform decision-ratio law"),
    ("zones.sigma", "0.2", "log-scale spread for lognormal"),
    ("zones.r_min", "0.5", "uniform range start"),
    ("zones.r_max", "1.6", "uniform range end"),
    ("zones.half_width", "0.1", "execution noise half-width, in [0, 1)"),
    ("zones.seed", "$CLIPLAB_SEED, else 0", "sampling seed"),
    ("ablate.seeds", "[0, 1, 2]", "seeds per operator"),
    ("ablate.operators", "six ablation rows", "hard, binary, soft-decay-k2/k3/k4, nsr; rows keep this order"),
    ("output.out_dir", "out", "directory for all outputs"),
];

/// Renders [`KEYS`] as an aligned table.
pub fn keys_help() -> String {
    let w0 = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let w1 = KEYS.iter().map(|k| k.1.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (TOML; flags override file values):\n");
    for (key, default, note) in KEYS {
        s.push_str(&format!("  {key:<w0$}  default {default:<w1$}  {note}\n"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Hard,
    Nsr,
    Binary,
    SoftDecay,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeModeArg {
    Coupled,
    Decoupled,
    OnlyRescue,
    OnlyPushOut,
}

impl From<ProbeModeArg> for ProbeMode {
    fn from(m: ProbeModeArg) -> Self {
        match m {
            ProbeModeArg::Coupled => ProbeMode::Coupled,
            ProbeModeArg::Decoupled => ProbeMode::Decoupled,
            ProbeModeArg::OnlyRescue => ProbeMode::OnlyRescue,
            ProbeModeArg::OnlyPushOut => ProbeMode::OnlyPushOut,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageModeArg {
    Normalized,
    RawBinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GranularityArg {
    Token,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ContextArg {
    Unigram,
    Bigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Lognormal,
    Uniform,
}

/// Implements `merge`: every flag that is set replaces the file value.
macro_rules! sections {
    ($($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? })*) => {$(
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
        #[serde(default)]
        pub struct $name {
            $($(#[$fmeta])* #[serde(skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>,)*
        }

        impl $name {
            pub fn merge(&self, flags: &Self) -> Self {
                Self { $($field: flags.$field.clone().or_else(|| self.$field.clone()),)* }
            }
        }
    )*};
}

sections! {
    OperatorSection {
        /// Clipping operator.
        #[arg(long = "operator", value_enum)]
        kind: OperatorKind,
        /// Rescue window of nsr/binary.
        #[arg(long)]
        delta: f64,
        /// Soft-decay exponent.
        #[arg(long)]
        k: u32,
        /// Probe variant.
        #[arg(long, value_enum)]
        probe_mode: ProbeModeArg,
        /// Probe noise half-width.
        #[arg(long = "probe-half-width")]
        half_width: f64,
    }

    RegionSection {
        #[arg(long)]
        eps_low: f64,
        #[arg(long)]
        eps_high: f64,
    }

    TrainSection {
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        group_size: usize,
        #[arg(long)]
        tasks_per_step: usize,
        #[arg(long)]
        inner_epochs: u32,
        #[arg(long)]
        learning_rate: f64,
        #[arg(long, value_enum)]
        advantage_mode: AdvantageModeArg,
        #[arg(long)]
        advantage_noise: f64,
        #[arg(long, value_enum)]
        granularity: GranularityArg,
        #[arg(long)]
        dynamic_sampling: bool,
        #[arg(long)]
        max_resample: u32,
        #[arg(long)]
        difficulty: u8,
        #[arg(long)]
        vocab_size: u32,
        #[arg(long)]
        max_len: usize,
        #[arg(long)]
        num_prompts: u32,
        #[arg(long, value_enum)]
        context_order: ContextArg,
        /// Trailing window for run finals.
        #[arg(long)]
        window: usize,
    }

    AnalyzeSection {
        #[arg(long)]
        u: f64,
        #[arg(long)]
        l: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        grid: usize,
        #[arg(long)]
        upper_min: f64,
        #[arg(long)]
        upper_max: f64,
        #[arg(long)]
        lower_min: f64,
        #[arg(long)]
        lower_max: f64,
        #[arg(long)]
        mc_samples: u64,
        #[arg(long)]
        seed: u64,
    }

    ZonesSection {
        #[arg(long)]
        samples: usize,
        #[arg(long, value_enum)]
        distribution: Distribution,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        r_min: f64,
        #[arg(long)]
        r_max: f64,
        #[arg(long)]
        half_width: f64,
        #[arg(long)]
        seed: u64,
    }

    AblateSection {
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        operators: Vec<String>,
    }

    OutputSection {
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
    }
}

/// Whole config file. Unknown keys are collected by the loader.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub operator: OperatorSection,
    pub region: RegionSection,
    pub train: TrainSection,
    pub analyze: AnalyzeSection,
    pub zones: ZonesSection,
    pub ablate: AblateSection,
    pub output: OutputSection,
}

/// Parses TOML, rejecting unknown keys with their full path.
pub fn parse_config(text: &str) -> Result<FileConfig, CliError> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| CliError::Config(vec![format!("invalid TOML: {e}")]))?;
    let mut unknown = Vec::new();
    let cfg: FileConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| CliError::Config(vec![format!("invalid config: {e}")]))?;
    if unknown.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(
            unknown.into_iter().map(|k| format!("unknown config key `{k}`")).collect(),
        ))
    }
}

/// Reads a config file, or returns the empty config.
pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(vec![format!("cannot read config {}: {e}", p.display())])
            })?;
            parse_config(&text).map_err(|e| match e {
                CliError::Config(list) => CliError::Config(
                    list.into_iter().map(|m| format!("{}: {m}", p.display())).collect(),
                ),
                other => other,
            })
        }
    }
}

/// Seed from an explicit value, else `CLIPLAB_SEED`, else 0.
pub fn resolve_seed(explicit: Option<u64>, problems: &mut Vec<String>) -> u64 {
    if let Some(s) = explicit {
        return s;
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().unwrap_or_else(|_| {
            problems.push(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"));
            0
        }),
        Err(_) => 0,
    }
}

/// Operator section with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedOperator {
    pub kind: OperatorKind,
    pub delta: f64,
    pub k: u32,
    pub probe_mode: ProbeModeArg,
    pub half_width: f64,
}

impl ResolvedOperator {
    pub fn resolve(s: &OperatorSection, granularity: GranularityArg) -> Self {
        let default_delta = match granularity {
            GranularityArg::Token => DEFAULT_DELTA,
            GranularityArg::Sequence => DEFAULT_SEQUENCE_DELTA,
        };
        Self {
            kind: s.kind.unwrap_or(OperatorKind::Hard),
            delta: s.delta.unwrap_or(default_delta),
            k: s.k.unwrap_or(2),
            probe_mode: s.probe_mode.unwrap_or(ProbeModeArg::Coupled),
            half_width: s.half_width.unwrap_or(DEFAULT_PROBE_HALF_WIDTH),
        }
    }

    pub fn operator(&self) -> ClipOperator {
        match self.kind {
            OperatorKind::Hard => ClipOperator::Hard,
            OperatorKind::Nsr => ClipOperator::Nsr { delta: self.delta },
            OperatorKind::Binary => ClipOperator::BinaryAdmission { delta: self.delta },
            OperatorKind::SoftDecay => ClipOperator::SoftDecay { k: self.k },
            OperatorKind::Probe => ClipOperator::NoiseProbe {
                mode: self.probe_mode.into(),
                half_width: self.half_width,
            },
        }
    }
}

/// Parses an operator label as printed by `ClipOperator::label`.
pub fn parse_operator_label(label: &str, delta: f64, half_width: f64) -> Option<ClipOperator> {
    let probe = |mode| ClipOperator::NoiseProbe { mode, half_width };
    Some(match label {
        "hard" => ClipOperator::Hard,
        "nsr" => ClipOperator::Nsr { delta },
        "binary" => ClipOperator::BinaryAdmission { delta },
        "probe-coupled" => probe(ProbeMode::Coupled),
        "probe-decoupled" => probe(ProbeMode::Decoupled),
        "probe-only-rescue" => probe(ProbeMode::OnlyRescue),
        "probe-only-push-out" => probe(ProbeMode::OnlyPushOut),
        other => ClipOperator::SoftDecay {
            k: {
                let k = other.strip_prefix("soft-decay-")?;
                k.strip_prefix('k').unwrap_or(k).parse().ok()?
            },
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedRegion {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl ResolvedRegion {
    pub fn resolve(s: &RegionSection) -> Self {
        Self {
            eps_low: s.eps_low.unwrap_or(TrustRegion::DAPO.eps_low()),
            eps_high: s.eps_high.unwrap_or(TrustRegion::DAPO.eps_high()),
        }
    }

    pub fn region(&self, problems: &mut Vec<String>) -> TrustRegion {
        TrustRegion::new(self.eps_low, self.eps_high).unwrap_or_else(|e| {
            problems.push(e.to_string());
            TrustRegion::DAPO
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedTrain {
    pub steps: u64,
    pub seed: u64,
    pub group_size: usize,
    pub tasks_per_step: usize,
    pub inner_epochs: u32,
    pub learning_rate: f64,
    pub advantage_mode: AdvantageModeArg,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantage_noise: Option<f64>,
    pub granularity: GranularityArg,
    pub dynamic_sampling: bool,
    pub max_resample: u32,
    pub difficulty: u8,
    pub vocab_size: u32,
    pub max_len: usize,
    pub num_prompts: u32,
    pub context_order: ContextArg,
    pub window: usize,
}

impl ResolvedTrain {
    /// `steps` must already be known.
    pub fn resolve(s: &TrainSection, steps: u64, problems: &mut Vec<String>) -> Self {
        let d = TrainConfig::default();
        let env = EnvConfig::default();
        Self {
            steps,
            seed: resolve_seed(s.seed, problems),
            group_size: s.group_size.unwrap_or(d.group_size),
            tasks_per_step: s.tasks_per_step.unwrap_or(d.tasks_per_step),
            inner_epochs: s.inner_epochs.unwrap_or(d.inner_epochs),
            learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
            advantage_mode: s.advantage_mode.unwrap_or(AdvantageModeArg::Normalized),
            advantage_noise: s.advantage_noise,
            granularity: s.granularity.unwrap_or(GranularityArg::Token),
            dynamic_sampling: s.dynamic_sampling.unwrap_or(d.dynamic_sampling),
            max_resample: s.max_resample.unwrap_or(d.max_resample),
            difficulty: s.difficulty.unwrap_or(d.difficulty),
            vocab_size: s.vocab_size.unwrap_or(env.vocab_size),
            max_len: s.max_len.unwrap_or(env.max_len),
            num_prompts: s.num_prompts.unwrap_or(env.num_prompts),
            context_order: s.context_order.unwrap_or(ContextArg::Bigram),
            window: s.window.unwrap_or(DEFAULT_SUMMARY_WINDOW.min(steps as usize)),
        }
    }

    pub fn train_config(&self, operator: ClipOperator, region: TrustRegion) -> TrainConfig {
        TrainConfig {
            operator,
            region,
            group_size: self.group_size,
            tasks_per_step: self.tasks_per_step,
            inner_epochs: self.inner_epochs,
            learning_rate: self.learning_rate,
            steps: self.steps,
            seed: self.seed,
            advantage_mode: match self.advantage_mode {
                AdvantageModeArg::Normalized => AdvantageMode::Normalized,
                AdvantageModeArg::RawBinary => AdvantageMode::RawBinary,
            },
            advantage_noise: self.advantage_noise,
            granularity: match self.granularity {
                GranularityArg::Token => Granularity::TokenLevel,
                GranularityArg::Sequence => Granularity::SequenceLevel,
            },
            dynamic_sampling: self.dynamic_sampling,
            max_resample: self.max_resample,
            difficulty: self.difficulty,
            env: EnvConfig {
                vocab_size: self.vocab_size,
                max_len: self.max_len,
                num_prompts: self.num_prompts,
                context_order: match self.context_order {
                    ContextArg::Unigram => ContextOrder::Unigram,
                    ContextArg::Bigram => ContextOrder::Bigram,
                },
            },
        }
    }

    /// Window must fit the run length.
    pub fn check_window(&self, problems: &mut Vec<String>) {
        if self.window == 0 || self.window as u64 > self.steps {
            problems.push(format!(
                "train.window must lie in 1..={}, got {}",
                self.steps, self.window
            ));
        }
    }
}

/// Collects core validation messages into `problems`.
pub fn validate_train(cfg: &TrainConfig, problems: &mut Vec<String>) {
    match cfg.validate() {
        Ok(()) => {}
        Err(cliplab_core::Error::InvalidConfig(list)) => problems.extend(list),
        Err(e) => problems.push(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedAnalyze {
    pub u: f64,
    pub l: f64,
    pub delta: f64,
    pub grid: usize,
    pub upper_min: f64,
    pub upper_max: f64,
    pub lower_min: f64,
    pub lower_max: f64,
    pub mc_samples: u64,
    pub seed: u64,
}

impl ResolvedAnalyze {
    pub fn resolve(s: &AnalyzeSection, problems: &mut Vec<String>) -> Self {
        let r = Self {
            u: s.u.unwrap_or(TrustRegion::DAPO.upper()),
            l: s.l.unwrap_or(TrustRegion::DAPO.lower()),
            delta: s.delta.unwrap_or(DEFAULT_DELTA),
            grid: s.grid.unwrap_or(200),
            upper_min: s.upper_min.unwrap_or(1.0),
            upper_max: s.upper_max.unwrap_or(1.6),
            lower_min: s.lower_min.unwrap_or(0.5),
            lower_max: s.lower_max.unwrap_or(1.1),
            mc_samples: s.mc_samples.unwrap_or(0),
            seed: resolve_seed(s.seed, problems),
        };
        if r.grid < 2 {
            problems.push(format!("analyze.grid must be at least 2, got {}", r.grid));
        }
        for (name, lo, hi) in [
            ("upper", r.upper_min, r.upper_max),
            ("lower", r.lower_min, r.lower_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                problems.push(format!(
                    "analyze {name} range must satisfy 0 < min < max, got [{lo}, {hi}]"
                ));
            }
        }
        if !(r.u.is_finite() && r.u > 1.0) {
            problems.push(format!("analyze.u must exceed 1, got {}", r.u));
        }
        if !(r.l.is_finite() && r.l > 0.0 && r.l < 1.0) {
            problems.push(format!("analyze.l must lie in (0, 1), got {}", r.l));
        }
        if !(r.delta > 0.0 && r.delta < 1.0) {
            problems.push(format!("analyze.delta must lie in (0, 1), got {}", r.delta));
        }
        if r.mc_samples != 0 && r.mc_samples < cliplab_core::expectation::MC_MIN_SAMPLES {
            problems.push(format!(
                "analyze.mc_samples must be 0 or at least {}, got {}",
                cliplab_core::expectation::MC_MIN_SAMPLES,
                r.mc_samples
            ));
        }
        r
    }

    /// Evenly spaced grid including both ends.
    pub fn grid_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = self.grid;
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedZones {
    pub samples: usize,
    pub distribution: Distribution,
    pub sigma: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub half_width: f64,
    pub seed: u64,
}

impl ResolvedZones {
    pub fn resolve(s: &ZonesSection, problems: &mut Vec<String>) -> Self {
        let r = Self {
            samples: s.samples.unwrap_or(10_000),
            distribution: s.distribution.unwrap_or(Distribution::Lognormal),
            sigma: s.sigma.unwrap_or(0.2),
            r_min: s.r_min.unwrap_or(0.5),
            r_max: s.r_max.unwrap_or(1.6),
            half_width: s.half_width.unwrap_or(DEFAULT_DELTA),
            seed: resolve_seed(s.seed, problems),
        };
        if r.samples == 0 {
            problems.push("zones.samples must be positive".into());
        }
        if !(0.0..1.0).contains(&r.half_width) {
            problems.push(format!("zones.half_width must lie in [0, 1), got {}", r.half_width));
        }
        match r.distribution {
            Distribution::Lognormal if !(r.sigma.is_finite() && r.sigma > 0.0) => {
                problems.push(format!("zones.sigma must be positive, got {}", r.sigma));
            }
            Distribution::Uniform
                if !(r.r_min.is_finite() && r.r_max.is_finite() && r.r_min > 0.0 && r.r_min < r.r_max) =>
            {
                problems.push(format!(
                    "zones uniform range must satisfy 0 < r_min < r_max, got [{}, {}]",
                    r.r_min, r.r_max
                ));
            }
            _ => {}
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedAblate {
    pub seeds: Vec<u64>,
    pub operators: Vec<String>,
}

impl ResolvedAblate {
    pub const DEFAULT_OPERATORS: [&'static str; 6] =
        ["hard", "binary", "soft-decay-k2", "soft-decay-k3", "soft-decay-k4", "nsr"];

    pub fn resolve(s: &AblateSection, problems: &mut Vec<String>) -> Self {
        let r = Self {
            seeds: s.seeds.clone().unwrap_or_else(|| vec![0, 1, 2]),
            operators: s.operators.clone().unwrap_or_else(|| {
                Self::DEFAULT_OPERATORS.iter().map(|s| s.to_string()).collect()
            }),
        };
        if r.seeds.is_empty() {
            problems.push("ablate.seeds must not be empty".into());
        }
        if r.operators.is_empty() {
            problems.push("ablate.operators must not be empty".into());
        }
        r
    }
}

pub fn out_dir(s: &OutputSection) -> PathBuf {
    s.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}
