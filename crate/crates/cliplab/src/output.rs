//! Output files: number formatting, stamped paths, CSV and JSONL writers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use cliplab_core::metrics::StepMetrics;
use cliplab_core::trainer::hex_digest;

use crate::error::CliError;

/// Significant digits used for every float in CSV output.
pub const SIG_DIGITS: usize = 12;

/// `%.12g`-style formatting: shortest of fixed or scientific notation with
/// trailing zeros removed.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= SIG_DIGITS as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Serializable settings plus the command name; the hash of this is what
/// output filenames are stamped with.
#[derive(Debug)]
pub struct Stamp {
    pub command: &'static str,
    pub resolved_toml: String,
    pub hash: String,
}

impl Stamp {
    pub fn new<T: Serialize>(command: &'static str, resolved: &T) -> Result<Self, CliError> {
        let resolved_toml = toml::to_string(resolved)
            .map_err(|e| CliError::Runtime(format!("cannot serialize resolved config: {e}")))?;
        let hash = hex_digest(format!("{command}\n{resolved_toml}").as_bytes())[..12].to_string();
        Ok(Self {
            command,
            resolved_toml,
            hash,
        })
    }

    /// `<dir>/<command>-<hash><suffix>`.
    pub fn path(&self, dir: &Path, suffix: &str) -> PathBuf {
        dir.join(format!("{}-{}{suffix}", self.command, self.hash))
    }

    /// Creates the directory and writes the resolved-config sidecar.
    pub fn prepare(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = self.path(dir, ".config.toml");
        let text = format!(
            "# resolved configuration for `{}`, hash {}\n{}",
            self.command, self.hash, self.resolved_toml
        );
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

pub fn csv_row(w: &mut csv::Writer<File>, path: &Path, row: &[String]) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| CliError::io(path, e))
}

pub fn csv_finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Line-delimited JSON metrics file. Truncated on open; every record is
/// flushed so the file stays parseable if the process dies.
pub struct JsonlSink {
    path: PathBuf,
    out: BufWriter<File>,
    last_step: Option<u64>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            last_step: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record. Steps must be strictly increasing.
    pub fn append_record(&mut self, m: &StepMetrics) -> Result<(), CliError> {
        if self.last_step.is_some_and(|s| m.step <= s) {
            return Err(CliError::Runtime(format!(
                "{}: step {} does not follow step {}",
                self.path.display(),
                m.step,
                self.last_step.unwrap_or_default()
            )));
        }
        serde_json::to_writer(&mut self.out, m).map_err(|e| CliError::io(&self.path, e))?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::io(&self.path, e))?;
        self.last_step = Some(m.step);
        Ok(())
    }
}

/// Reads every record of a JSONL metrics file.
pub fn read_jsonl(path: &Path) -> Result<Vec<StepMetrics>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| CliError::io(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}
