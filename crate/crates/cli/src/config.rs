use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softsense::design::{DesignConfig, Method};
use softsense::study::ScenarioConfig;

/// Everything a run needs, as read from a TOML manifest. Command-line flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub verbosity: u8,
    pub methods: Vec<Method>,
    pub runs: usize,
    /// Monte Carlo workers; all cores when absent.
    pub jobs: Option<usize>,
    pub scenario: ScenarioConfig,
    pub design: DesignConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            verbosity: 0,
            methods: Method::ALL.to_vec(),
            runs: 100,
            jobs: None,
            scenario: ScenarioConfig::default(),
            design: DesignConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scenario.validate().map_err(|e| format!("scenario: {e}"))?;
        self.design.validate().map_err(|e| format!("design: {e}"))?;
        if self.methods.is_empty() {
            return Err("methods: at least one method is required".into());
        }
        if self.runs == 0 {
            return Err("runs: must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return Err("jobs: must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_manifest(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
