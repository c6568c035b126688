//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::commands::{self, Context};
use crate::config::{
    keys_help, load_config, out_dir, AblateSection, AnalyzeSection, FileConfig, OperatorSection,
    OutputSection, RegionSection, TrainSection, ZonesSection,
};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cliplab",
    version,
    about = "Trust-region clipping experiments: expectation curves, training runs, ablations and zone maps",
    after_help = keys_help(),
    after_long_help = keys_help()
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputSection,
    /// Worker threads (0 or unset: all cores). Never changes results.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write expected-ratio and expected-gradient curves for both bounds.
    #[command(after_help = keys_help())]
    Analyze {
        #[command(flatten)]
        analyze: AnalyzeSection,
        #[command(flatten)]
        common: Common,
    },
    /// Run one training job and write its metrics.
    #[command(after_help = keys_help())]
    Train {
        #[command(flatten)]
        operator: OperatorSection,
        #[command(flatten)]
        region: RegionSection,
        #[command(flatten)]
        train: TrainSection,
        #[command(flatten)]
        common: Common,
    },
    /// Run the operator-by-seed matrix.
    #[command(after_help = keys_help())]
    Ablate {
        #[command(flatten)]
        operator: OperatorSection,
        #[command(flatten)]
        region: RegionSection,
        #[command(flatten)]
        train: TrainSection,
        #[command(flatten)]
        ablate: AblateSection,
        #[command(flatten)]
        common: Common,
    },
    /// Sample decision/execution ratio pairs with their zone labels.
    #[command(after_help = keys_help())]
    Zones {
        #[command(flatten)]
        zones: ZonesSection,
        #[command(flatten)]
        region: RegionSection,
        #[command(flatten)]
        common: Common,
    },
}

fn context(file: &FileConfig, common: &Common) -> Result<Context, CliError> {
    Context::new(out_dir(&file.output.merge(&common.output)), common.threads)
}

/// Runs a parsed command line; output paths go to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { analyze, common } => {
            let file = load_config(common.config.as_deref())?;
            let ctx = context(&file, &common)?;
            for p in commands::analyze::run(&file.analyze.merge(&analyze), &ctx)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Train {
            operator,
            region,
            train,
            common,
        } => {
            let file = load_config(common.config.as_deref())?;
            let merged = FileConfig {
                operator: file.operator.merge(&operator),
                region: file.region.merge(&region),
                train: file.train.merge(&train),
                ..file.clone()
            };
            let Some(steps) = merged.train.steps else {
                let mut cmd = Cli::command();
                let sub = cmd.find_subcommand_mut("train").expect("train subcommand");
                let mut sub = sub.clone().bin_name("cliplab train");
                sub.error(
                    ErrorKind::MissingRequiredArgument,
                    "`--steps` is required (flag or `train.steps` in the config file)",
                )
                .exit();
            };
            let ctx = context(&file, &common)?;
            let out = commands::train::run(&merged, steps, &ctx)?;
            println!("wrote {}", out.jsonl.display());
            println!("wrote {}", out.summary.display());
            println!("final {} peak {}", out.final_value, out.peak);
        }
        Command::Ablate {
            operator,
            region,
            train,
            ablate,
            common,
        } => {
            let file = load_config(common.config.as_deref())?;
            let merged = FileConfig {
                operator: file.operator.merge(&operator),
                region: file.region.merge(&region),
                train: file.train.merge(&train),
                ablate: file.ablate.merge(&ablate),
                ..file.clone()
            };
            let ctx = context(&file, &common)?;
            let out = commands::ablate::run(&merged, &ctx)?;
            print!("{}", out.table);
            println!("wrote {}", out.csv.display());
            println!("wrote {}", out.text.display());
            let mut failed = 0;
            for row in &out.matrix.rows {
                for (seed, run) in &row.runs {
                    if let Err(e) = run {
                        log::error!("{} seed {seed}: {e}", row.label);
                        failed += 1;
                    }
                }
            }
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} matrix cell(s) failed")));
            }
        }
        Command::Zones {
            zones,
            region,
            common,
        } => {
            let file = load_config(common.config.as_deref())?;
            let ctx = context(&file, &common)?;
            for p in commands::zones::run(
                &file.zones.merge(&zones),
                &file.region.merge(&region),
                &ctx,
            )? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

/// Process entry point: parses arguments, runs, and maps errors to exit codes.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
