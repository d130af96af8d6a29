//! JSON report emitted next to each run's artifacts.

use serde::{Deserialize, Serialize};

use crate::config::{GainCheckPolicy, ScenarioConfig};
use crate::potential::FeasibilityReport;
use crate::simulator::MonitorReport;
use crate::verify::GainCertificate;

/// Command-line values that replaced config entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
}

/// Certificate outcome as reported; `error` is set when the delay
/// constants could not be formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub policy: GainCheckPolicy,
    pub certificate: Option<GainCertificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    /// Fully resolved scenario; re-parsing it reproduces the run.
    pub scenario: ScenarioConfig,
    pub defaults_applied: Vec<String>,
    pub overrides: Overrides,
    pub edges: Vec<(usize, usize)>,
    pub monitors: Option<MonitorReport>,
    pub gains: Option<CertificateEntry>,
    pub feasibility: Option<FeasibilityReport>,
    pub artifacts: Vec<String>,
    pub runtime_seconds: Option<f64>,
    pub passed: bool,
}

impl RunReport {
    pub fn new(scenario: ScenarioConfig, defaults_applied: Vec<String>, overrides: Overrides) -> Self {
        Self {
            name: scenario.name().to_string(),
            scenario,
            defaults_applied,
            overrides,
            edges: Vec::new(),
            monitors: None,
            gains: None,
            feasibility: None,
            artifacts: Vec::new(),
            runtime_seconds: None,
            passed: false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
