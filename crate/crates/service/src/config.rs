use std::net::SocketAddr;
use std::path::PathBuf;

use evidence_core::featurize::DEFAULT_TEXT_DIM;
use evidence_core::pnn::PriorMode;
use evidence_core::Execution;
use serde::{Deserialize, Serialize};

pub const DATA_DIR_ENV: &str = "EVIDENCE_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub listen: SocketAddr,
    pub text_dim: usize,
    /// Fixed smoothing width; `None` searches the default grid.
    pub sigma: Option<f64>,
    pub seed: u64,
    pub prior_mode: PriorMode,
    pub test_fraction: f64,
    pub importance_repeats: usize,
    pub exec: Execution,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("data"),
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            text_dim: DEFAULT_TEXT_DIM,
            sigma: None,
            seed: 42,
            prior_mode: PriorMode::Empirical,
            test_fraction: 0.2,
            importance_repeats: evidence_core::explain::DEFAULT_REPEATS,
            exec: Execution::default(),
        }
    }
}

impl ServiceConfig {
    /// Applies `EVIDENCE_DATA_DIR` when it is set and non-empty.
    pub fn with_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
            self.data_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn with_data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = dir.into();
        self
    }
}
