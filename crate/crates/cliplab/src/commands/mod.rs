pub mod ablate;
pub mod analyze;
pub mod train;
pub mod zones;

use std::path::PathBuf;

use crate::error::CliError;

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub pool: std::sync::Arc<rayon::ThreadPool>,
}

impl Context {
    pub fn new(out_dir: PathBuf, threads: Option<usize>) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            out_dir,
            pool: std::sync::Arc::new(pool),
        })
    }
}
