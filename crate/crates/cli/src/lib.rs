//! Experiment plumbing behind the `utraj` executable: simulation, tracking,
//! training, evaluation, figures and the resumable end-to-end pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{Error, Result};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "UNCERTAIN_TRAJ_THREADS";

/// Size the global worker pool: the flag wins, then the environment, then rayon's default.
pub fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::Usage("thread count must be at least 1".into()));
    }
    if let Some(n) = n {
        // A second initialization (e.g. in tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
