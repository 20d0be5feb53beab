use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::output::Format;

/// Options shared by the figure, trajectory and bench commands. `None`
/// fields fall back to per-figure defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub out: PathBuf,
    pub format: Format,
    pub threads: usize,
    pub build_cache: bool,
    pub finite_alpha: bool,
    pub cache_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: None,
            alpha: None,
            tau: None,
            seed: 0,
            rounds: None,
            out: PathBuf::from("out"),
            format: Format::Csv,
            threads: 1,
            build_cache: false,
            finite_alpha: false,
            cache_dir: crate::cache::default_dir(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == Some(0) {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("alpha must be non-negative, got {a}")));
            }
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_or(&self, default: usize) -> usize {
        self.n.unwrap_or(default)
    }

    pub fn alpha_or(&self, default: f64) -> f64 {
        self.alpha.unwrap_or(default)
    }

    pub fn rounds_or(&self, default: usize) -> usize {
        self.rounds.unwrap_or(default)
    }
}
