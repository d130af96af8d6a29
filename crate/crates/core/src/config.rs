//! JSON scenario configuration.
//!
//! Units: positions in m (single-integrator) or rad (joint angles),
//! velocities in m/s or rad/s, `r`/`epsilon`/`rho` in the same length unit,
//! `q` in length², delays/step/horizon in s, masses in kg, link lengths in
//! m, gravity in m/s².
//!
//! Optional keys are resolved during parsing and every key that received a
//! default is listed in [`ParsedConfig::defaults_applied`]. The resolved
//! config serializes with every key present, so re-parsing emitted JSON
//! reproduces it exactly.

use serde::{Deserialize, Serialize};

use crate::delay::ProfileKind;
use crate::dynamics::ElModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    SingleIntegrator,
    EulerLagrange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainCheckPolicy {
    /// Refuse to run unless the damping-gain certificate passes.
    #[default]
    Enforce,
    /// Run regardless; the certificate outcome is still reported.
    Bypass,
}

/// Per-agent damping: a scalar (`k·I`) or an explicit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Damping {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDelay {
    /// 1-based agent indices of the undirected edge.
    pub agents: [usize; 2],
    pub dbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    /// Default delay bound for every channel (s).
    pub dbar: f64,
    #[serde(default)]
    pub profile: Option<ProfileKind>,
    /// Per-edge bounds replacing `dbar` (applied to both directions).
    #[serde(default)]
    pub overrides: Option<Vec<EdgeDelay>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub network: NetworkKind,
    /// Initial positions, one vector per agent.
    pub positions: Vec<Vec<f64>>,
    /// Initial velocities (filter state for single integrators); zeros by default.
    #[serde(default)]
    pub velocities: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub dim: Option<usize>,
    pub r: f64,
    pub epsilon: f64,
    /// Edge threshold for the initial graph; defaults to `r − epsilon`.
    #[serde(default)]
    pub rho: Option<f64>,
    pub q: f64,
    /// Proportional gain; defaults to 1.
    #[serde(default)]
    pub p: Option<f64>,
    pub damping: Vec<Damping>,
    pub delay: DelayConfig,
    #[serde(default)]
    pub el_model: Option<ElModel>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub decimation: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub consensus_tolerance: Option<f64>,
    #[serde(default)]
    pub lyapunov_tolerance: Option<f64>,
    #[serde(default)]
    pub gain_check: Option<GainCheckPolicy>,
}

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON_SI: f64 = 20.0;
pub const DEFAULT_HORIZON_EL: f64 = 30.0;
pub const DEFAULT_DECIMATION: usize = 10;
pub const DEFAULT_CONSENSUS_TOLERANCE: f64 = 1e-2;
pub const DEFAULT_LYAPUNOV_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_P: f64 = 1.0;

pub const SI_FIG1: &str = include_str!("../scenarios/si_fig1.json");
pub const EL_FIG2: &str = include_str!("../scenarios/el_fig2.json");

/// Bundled scenario text by name (`si_fig1`, `el_fig2`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".json") {
        "si_fig1" => Some(SI_FIG1),
        "el_fig2" => Some(EL_FIG2),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: ScenarioConfig,
    pub defaults_applied: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    let defaults_applied = config.resolve()?;
    Ok(ParsedConfig {
        config,
        defaults_applied,
    })
}

pub fn parse_config_file(path: &std::path::Path) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    // accessors valid after `resolve`
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }
    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(0)
    }
    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(self.r - self.epsilon)
    }
    pub fn p(&self) -> f64 {
        self.p.unwrap_or(DEFAULT_P)
    }
    pub fn step(&self) -> f64 {
        self.step.unwrap_or(DEFAULT_STEP)
    }
    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(match self.network {
            NetworkKind::SingleIntegrator => DEFAULT_HORIZON_SI,
            NetworkKind::EulerLagrange => DEFAULT_HORIZON_EL,
        })
    }
    pub fn decimation(&self) -> usize {
        self.decimation.unwrap_or(DEFAULT_DECIMATION)
    }
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
    pub fn consensus_tolerance(&self) -> f64 {
        self.consensus_tolerance.unwrap_or(DEFAULT_CONSENSUS_TOLERANCE)
    }
    pub fn lyapunov_tolerance(&self) -> f64 {
        self.lyapunov_tolerance.unwrap_or(DEFAULT_LYAPUNOV_TOLERANCE)
    }
    pub fn gain_check(&self) -> GainCheckPolicy {
        self.gain_check.unwrap_or_default()
    }
    pub fn profile(&self) -> ProfileKind {
        self.delay.profile.clone().unwrap_or_default()
    }
    pub fn velocities(&self) -> Vec<Vec<f64>> {
        self.velocities
            .clone()
            .unwrap_or_else(|| vec![vec![0.0; self.dim()]; self.n_agents()])
    }
    pub fn el_model(&self) -> ElModel {
        self.el_model.unwrap_or_default()
    }

    /// Diagonal damping per agent.
    pub fn damping_diagonals(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        self.damping
            .iter()
            .map(|d| match d {
                Damping::Scalar(k) => vec![*k; dim],
                Damping::Diagonal(v) => v.clone(),
            })
            .collect()
    }

    /// Delay bound for the undirected edge between 0-based agents `i` and `j`.
    pub fn edge_dbar(&self, i: usize, j: usize) -> f64 {
        self.delay
            .overrides
            .iter()
            .flatten()
            .rev()
            .find(|o| {
                let [a, b] = o.agents;
                (a == i + 1 && b == j + 1) || (a == j + 1 && b == i + 1)
            })
            .map_or(self.delay.dbar, |o| o.dbar)
    }

    /// Fill in defaults and validate. Returns the keys that were defaulted.
    pub fn resolve(&mut self) -> Result<Vec<String>> {
        let mut defaulted = Vec::new();
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::config("positions", "at least one agent is required"));
        }
        let dim = match self.dim {
            Some(d) => d,
            None => {
                defaulted.push("dim".to_string());
                self.positions[0].len()
            }
        };
        if dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.network == NetworkKind::EulerLagrange && dim != 2 {
            return Err(Error::config("dim", format!("euler-lagrange agents have 2 joints, got {dim}")));
        }
        self.dim = Some(dim);
        for (i, x) in self.positions.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::config(format!("positions[{i}]"), format!("expected {dim} coordinates, got {}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("positions[{i}]"), "coordinates must be finite"));
            }
        }
        match &self.velocities {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::config("velocities", format!("expected {n} agents, got {}", v.len())));
                }
                for (i, x) in v.iter().enumerate() {
                    if x.len() != dim || x.iter().any(|c| !c.is_finite()) {
                        return Err(Error::config(format!("velocities[{i}]"), format!("expected {dim} finite values")));
                    }
                }
            }
            None => {
                defaulted.push("velocities".to_string());
                self.velocities = Some(vec![vec![0.0; dim]; n]);
            }
        }

        positive("r", self.r)?;
        if !(self.epsilon > 0.0 && self.epsilon < self.r) {
            return Err(Error::config("epsilon", format!("must satisfy 0 < epsilon < r, got {}", self.epsilon)));
        }
        if self.rho.is_none() {
            defaulted.push("rho".to_string());
            self.rho = Some(self.r - self.epsilon);
        }
        let rho = self.rho();
        if !(rho > 0.0 && rho <= self.r) {
            return Err(Error::config("rho", format!("must satisfy 0 < rho <= r, got {rho}")));
        }
        positive("q", self.q)?;
        if self.p.is_none() {
            defaulted.push("p".to_string());
            self.p = Some(DEFAULT_P);
        }
        positive("p", self.p())?;

        if self.damping.len() != n {
            return Err(Error::config("damping", format!("expected {n} agents, got {}", self.damping.len())));
        }
        for (i, d) in self.damping.iter_mut().enumerate() {
            let diag = match d {
                Damping::Scalar(k) => vec![*k; dim],
                Damping::Diagonal(v) => v.clone(),
            };
            if diag.len() != dim {
                return Err(Error::config(format!("damping[{i}]"), format!("expected {dim} diagonal entries, got {}", diag.len())));
            }
            for (k, v) in diag.iter().enumerate() {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("damping[{i}][{k}]"), format!("must be positive, got {v}")));
                }
            }
            *d = Damping::Diagonal(diag);
        }

        if !(self.delay.dbar >= 0.0 && self.delay.dbar.is_finite()) {
            return Err(Error::config("delay.dbar", format!("must be finite and non-negative, got {}", self.delay.dbar)));
        }
        if self.delay.profile.is_none() {
            defaulted.push("delay.profile".to_string());
            self.delay.profile = Some(ProfileKind::default());
        }
        match self.profile() {
            ProfileKind::Constant { fraction } if !(0.0..=1.0).contains(&fraction) => {
                return Err(Error::config("delay.profile.fraction", format!("must be in [0, 1], got {fraction}")));
            }
            ProfileKind::Sinusoidal { frequency } if !(frequency >= 0.0 && frequency.is_finite()) => {
                return Err(Error::config("delay.profile.frequency", format!("must be finite and non-negative, got {frequency}")));
            }
            ProfileKind::RandomWalk { step_std, knot_spacing } => {
                if !(step_std >= 0.0 && step_std.is_finite()) {
                    return Err(Error::config("delay.profile.step_std", format!("must be finite and non-negative, got {step_std}")));
                }
                positive("delay.profile.knot_spacing", knot_spacing)?;
            }
            _ => {}
        }
        if self.delay.overrides.is_none() {
            defaulted.push("delay.overrides".to_string());
            self.delay.overrides = Some(Vec::new());
        }
        for (k, o) in self.delay.overrides.iter().flatten().enumerate() {
            let [a, b] = o.agents;
            if a == 0 || b == 0 || a > n || b > n || a == b {
                return Err(Error::config(format!("delay.overrides[{k}].agents"), format!("invalid agent pair [{a}, {b}] for {n} agents")));
            }
            if !(o.dbar >= 0.0 && o.dbar.is_finite()) {
                return Err(Error::config(format!("delay.overrides[{k}].dbar"), format!("must be finite and non-negative, got {}", o.dbar)));
            }
        }

        match self.network {
            NetworkKind::EulerLagrange => {
                if self.el_model.is_none() {
                    defaulted.push("el_model".to_string());
                    self.el_model = Some(ElModel::default());
                }
                self.el_model()
                    .validate()
                    .map_err(|e| Error::config("el_model", e.to_string()))?;
            }
            NetworkKind::SingleIntegrator => {
                if self.el_model.is_some() {
                    return Err(Error::config("el_model", "only valid for euler-lagrange networks"));
                }
            }
        }

        macro_rules! default_key {
            ($field:ident, $value:expr) => {
                if self.$field.is_none() {
                    defaulted.push(stringify!($field).to_string());
                    self.$field = Some($value);
                }
            };
        }
        default_key!(name, "scenario".to_string());
        default_key!(step, DEFAULT_STEP);
        let horizon = self.horizon();
        default_key!(horizon, horizon);
        default_key!(decimation, DEFAULT_DECIMATION);
        default_key!(seed, 0);
        default_key!(consensus_tolerance, DEFAULT_CONSENSUS_TOLERANCE);
        default_key!(lyapunov_tolerance, DEFAULT_LYAPUNOV_TOLERANCE);
        default_key!(gain_check, GainCheckPolicy::Enforce);

        positive("step", self.step())?;
        positive("horizon", self.horizon())?;
        if self.decimation() == 0 {
            return Err(Error::config("decimation", "must be at least 1"));
        }
        positive("consensus_tolerance", self.consensus_tolerance())?;
        if !(self.lyapunov_tolerance() >= 0.0 && self.lyapunov_tolerance().is_finite()) {
            return Err(Error::config("lyapunov_tolerance", "must be finite and non-negative"));
        }
        let dbar_min = self.min_positive_dbar();
        if let Some(dmin) = dbar_min {
            if self.step() > dmin / 10.0 {
                return Err(Error::config(
                    "step",
                    format!("must resolve the delays: step {} > d̄_min/10 = {}", self.step(), dmin / 10.0),
                ));
            }
        }
        Ok(defaulted)
    }

    fn min_positive_dbar(&self) -> Option<f64> {
        std::iter::once(self.delay.dbar)
            .chain(self.delay.overrides.iter().flatten().map(|o| o.dbar))
            .filter(|&d| d > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Apply command-line overrides; the config must already be resolved.
    pub fn with_overrides(&self, seed: Option<u64>, step: Option<f64>, horizon: Option<f64>) -> Result<Self> {
        let mut cfg = self.clone();
        if seed.is_some() {
            cfg.seed = seed;
        }
        if step.is_some() {
            cfg.step = step;
        }
        if horizon.is_some() {
            cfg.horizon = horizon;
        }
        cfg.resolve()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_si() {
        let parsed = parse_config(SI_FIG1).unwrap();
        let c = parsed.config;
        assert_eq!(c.n_agents(), 5);
        assert_eq!((c.r, c.epsilon, c.q, c.delay.dbar), (1.0, 0.4, 0.2, 0.1));
        let k: Vec<f64> = c.damping_diagonals().iter().map(|d| d[0]).collect();
        assert_eq!(k, vec![30.0, 60.0, 60.0, 60.0, 30.0]);
        assert_eq!(c.p(), 1.0);
        assert_eq!(c.rho(), 0.6);
    }

    #[test]
    fn bundled_el() {
        let c = parse_config(EL_FIG2).unwrap().config;
        assert_eq!(c.network, NetworkKind::EulerLagrange);
        assert_eq!(c.p(), 0.01);
        assert_eq!(c.rho(), 1.0);
        let k = c.damping_diagonals();
        assert_eq!(k[0], vec![360.0, 360.0]);
        assert_eq!(k[2], vec![1080.0, 1080.0]);
        let pi = std::f64::consts::PI;
        assert_eq!(c.positions[0], vec![pi / 12.0, -5.0 * pi / 12.0]);
        assert_eq!(c.positions[4], vec![9.0 * pi / 24.0, -5.0 * pi / 12.0]);
    }

    #[test]
    fn defaults_are_recorded_and_round_trip() {
        let text = r#"{"network":"single-integrator","positions":[[0.0],[0.5]],"r":1,"epsilon":0.4,"q":0.2,
            "damping":[1,2],"delay":{"dbar":0.1}}"#;
        let parsed = parse_config(text).unwrap();
        for key in ["p", "rho", "step", "horizon", "delay.profile", "velocities", "gain_check"] {
            assert!(parsed.defaults_applied.iter().any(|k| k == key), "{key} not recorded");
        }
        let again = parse_config(&parsed.config.to_json()).unwrap();
        assert_eq!(again.config, parsed.config);
        assert!(again.defaults_applied.is_empty());
    }

    #[test]
    fn rejects_unknown_keys_with_path() {
        let text = r#"{"network":"single-integrator","positions":[[0.0]],"r":1,"epsilon":0.4,"q":0.2,
            "damping":[1],"delay":{"dbar":0.1,"bogus":1}}"#;
        match parse_config(text) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "delay.bogus");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step() {
        for step in ["0", "-1e-3", "0.05"] {
            let text = format!(
                r#"{{"network":"single-integrator","positions":[[0.0],[0.5]],"r":1,"epsilon":0.4,"q":0.2,
                "damping":[1,1],"delay":{{"dbar":0.1}},"step":{step}}}"#
            );
            match parse_config(&text) {
                Err(Error::Config { path, .. }) => assert_eq!(path, "step"),
                other => panic!("step {step}: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_non_positive_damping_with_path() {
        let text = r#"{"network":"single-integrator","positions":[[0.0],[0.5]],"r":1,"epsilon":0.4,"q":0.2,
            "damping":[1,0],"delay":{"dbar":0.1}}"#;
        match parse_config(text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "damping[1][0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edge_overrides_apply_both_ways() {
        let text = r#"{"network":"single-integrator","positions":[[0.0],[0.5],[0.9]],"r":1,"epsilon":0.4,"q":0.2,
            "damping":[1,1,1],"delay":{"dbar":0.1,"overrides":[{"agents":[3,2],"dbar":0.05}]},"step":1e-3}"#;
        let c = parse_config(text).unwrap().config;
        assert_eq!(c.edge_dbar(1, 2), 0.05);
        assert_eq!(c.edge_dbar(2, 1), 0.05);
        assert_eq!(c.edge_dbar(0, 1), 0.1);
    }
}
