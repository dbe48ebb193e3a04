use serde_json::json;

use crate::cache::CacheError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("missing cache {path} for shape {shape:?}")]
    MissingCache { shape: String, path: String },
    #[error("cache for shape {0:?} is stale: mesh or parameters changed since precompute")]
    StaleCache(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("{0}")]
    Compute(String),
    #[error("output directory is locked by {0}")]
    Locked(String),
    #[error("{} of {} shapes failed", failures.len(), total)]
    PartialFailure { failures: Vec<(String, String)>, total: usize },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::MissingCache { .. } => "missing_cache",
            CliError::StaleCache(_) => "stale_cache",
            CliError::Cache(_) => "cache",
            CliError::Compute(_) => "compute",
            CliError::Locked(_) => "locked",
            CliError::PartialFailure { .. } => "partial_failure",
        }
    }

    fn hint(&self) -> Option<String> {
        match self {
            CliError::MissingCache { .. } | CliError::StaleCache(_) => {
                Some("run `gcnn precompute --config <config>` first".into())
            }
            CliError::Locked(path) => Some(format!("if no other gcnn process is running, delete {path}")),
            _ => None,
        }
    }

    /// One-line machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Some(h) = self.hint() {
            v["hint"] = json!(h);
        }
        match self {
            CliError::MissingCache { shape, .. } | CliError::StaleCache(shape) => v["shape"] = json!(shape),
            CliError::PartialFailure { failures, .. } => {
                v["failures"] = failures.iter().map(|(s, m)| json!({ "shape": s, "message": m })).collect();
            }
            _ => {}
        }
        v.to_string()
    }
}

macro_rules! compute_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Compute(e.to_string())
            }
        }
    )*};
}

compute_error!(
    gcnn_core::mesh::MeshError,
    gcnn_core::spectral::SpectralError,
    gcnn_core::charting::ChartError,
    gcnn_core::net::NetError,
    gcnn_core::learn::LearnError,
    gcnn_core::eval::EvalError
);
