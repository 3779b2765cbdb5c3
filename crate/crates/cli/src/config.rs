//! The `--config` TOML file. Every section is optional and every key falls
//! back to its library default.
//!
//! ```toml
//! [policy]
//! exploration = 1.0
//!
//! [workload]
//! distribution = "hotspot"
//! n_requests = 2000
//!
//! [sweep]
//! policies = ["vaac", "lru"]
//! cache_fractions = [0.1, 0.5]
//!
//! [remote]
//! base_url = "http://localhost:8000/v1"
//! model = "qwen2.5-7b-instruct"
//! api_key_env = "ANNOTATOR_KEY"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use toolcache_core::annotator::RemoteConfig;
use toolcache_core::model::PolicyConfig;
use toolcache_core::sim::DEFAULT_FRACTIONS;
use toolcache_core::workload::WorkloadConfig;
use toolcache_core::PolicyKind;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub policy: PolicyConfig,
    pub workload: WorkloadConfig,
    pub sweep: SweepSection,
    pub remote: RemoteConfig,
    /// Tool catalog JSON used by `generate`.
    pub catalog: Option<PathBuf>,
    /// Tool manifest JSON used to annotate raw traces.
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub policies: Vec<PolicyKind>,
    pub cache_fractions: Vec<f64>,
    pub threads: Option<usize>,
    pub timings: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            policies: PolicyKind::ALL.to_vec(),
            cache_fractions: DEFAULT_FRACTIONS.to_vec(),
            threads: None,
            timings: false,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.policy.validate().map_err(|e| e.to_string())?;
        cfg.workload.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
