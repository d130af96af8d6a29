//! Fixed-step integration of the delayed closed loop (method of steps) with
//! Lyapunov, connectivity and consensus monitors.
//!
//! Each step is classical RK4. Delayed positions are looked up at every
//! stage time `t_s`: lookback times at or before the step start `t_n` are
//! read from the recorded histories; lookback times inside the current step
//! (short delays) are interpolated between the state at `t_n` and the stage
//! state at `t_s`. Histories are appended once per accepted step.

use serde::{Deserialize, Serialize};

use crate::config::{GainCheckPolicy, NetworkKind, ScenarioConfig};
use crate::delay::{DelayProfile, History};
use crate::dynamics::{el_rhs, si_rhs, ControlGains, ElAgentState, ElModel};
use crate::graph::{distance, Channel, CommGraph};
use crate::potential::{psi, DelayBounds, PotentialParams};
use crate::verify::scenario_certificate;
use crate::{Error, Result};

/// A scenario with its graph, gains and delay channels realized.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: NetworkKind,
    pub graph: CommGraph,
    pub params: PotentialParams,
    pub gains: ControlGains,
    pub model: Option<ElModel>,
    pub bounds: DelayBounds,
    /// One profile per channel of `graph`.
    pub profiles: Vec<DelayProfile>,
    /// Flat `N × dim` initial positions.
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
    pub decimation: usize,
    pub gain_check: GainCheckPolicy,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed relative growth of V over V(0).
    pub lyapunov: f64,
    /// Final spread below which consensus is declared.
    pub consensus: f64,
}

impl Scenario {
    /// `cfg` must be resolved (as returned by `parse_config`).
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let mut cfg = cfg.clone();
        cfg.resolve()?;
        let n = cfg.n_agents();
        let dim = cfg.dim();
        let graph = CommGraph::from_positions(&cfg.positions, cfg.r, cfg.rho())?;
        let params = PotentialParams::new(cfg.r, cfg.q, cfg.epsilon, n, dim, cfg.p())?;
        let gains = ControlGains::new(cfg.p(), cfg.damping_diagonals())?;
        let bounds = DelayBounds::from_fn(&graph, |c| cfg.edge_dbar(c.receiver, c.source));
        let count = graph.channels().len();
        let profile = cfg.profile();
        let profiles = graph
            .channels()
            .iter()
            .enumerate()
            .map(|(k, _)| profile.realize(bounds.channel(k), k, count, cfg.horizon(), cfg.seed()))
            .collect::<Result<Vec<_>>>()?;
        let model = match cfg.network {
            NetworkKind::EulerLagrange => Some(cfg.el_model()),
            NetworkKind::SingleIntegrator => None,
        };
        Ok(Self {
            kind: cfg.network,
            graph,
            params,
            gains,
            model,
            bounds,
            profiles,
            positions: cfg.positions.concat(),
            velocities: cfg.velocities().concat(),
            step: cfg.step(),
            horizon: cfg.horizon(),
            decimation: cfg.decimation(),
            gain_check: cfg.gain_check(),
            tolerances: Tolerances {
                lyapunov: cfg.lyapunov_tolerance(),
                consensus: cfg.consensus_tolerance(),
            },
        })
    }

    pub fn n_agents(&self) -> usize {
        self.graph.n_agents()
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Kinetic part of V at the given velocities: ½Σ|u|² or ½Σq̇ᵀMq̇.
    pub fn kinetic_energy(&self, positions: &[f64], velocities: &[f64]) -> f64 {
        let dim = self.dim();
        match (self.kind, &self.model) {
            (NetworkKind::EulerLagrange, Some(model)) => (0..self.n_agents())
                .map(|i| {
                    model.kinetic_energy(&ElAgentState {
                        q: [positions[2 * i], positions[2 * i + 1]],
                        qdot: [velocities[2 * i], velocities[2 * i + 1]],
                    })
                })
                .sum(),
            _ => 0.5 * velocities[..self.n_agents() * dim].iter().map(|v| v * v).sum::<f64>(),
        }
    }
}

/// `V = (p/2) Σ_i Σ_{j ∈ N_i(0)} ψ(|x_ij|) + kinetic part`.
pub fn lyapunov_value(scenario: &Scenario, positions: &[f64], velocities: &[f64]) -> Result<f64> {
    let dim = scenario.dim();
    let mut potential = 0.0;
    for e in scenario.graph.edges() {
        let d = distance(&positions[e.tail * dim..(e.tail + 1) * dim], &positions[e.head * dim..(e.head + 1) * dim]);
        // each undirected edge appears twice in the ordered double sum
        potential += psi(d, &scenario.params)?;
    }
    Ok(scenario.params.p * potential + scenario.kinetic_energy(positions, velocities))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub lyapunov: f64,
    /// Largest pairwise distance between agents.
    pub spread: f64,
    /// `min over initial edges of (r − |x_ij|)`.
    pub margin: f64,
    /// Distance per initial edge, in edge order.
    pub distances: Vec<f64>,
    /// Delayed position per channel at `t`.
    pub delayed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub t: f64,
    /// Set when an edge distance reached the potential's pole, which also
    /// means the edge left the broadcast radius.
    pub domain_breach: bool,
    pub reason: String,
}

impl Abort {
    fn from_error(t: f64, e: &Error) -> Self {
        Self {
            t,
            domain_breach: matches!(e, Error::PotentialDomain { .. }),
            reason: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub kind: NetworkKind,
    pub n_agents: usize,
    pub dim: usize,
    pub r: f64,
    pub edges: Vec<(usize, usize)>,
    pub channels: Vec<(usize, usize)>,
    pub samples: Vec<Sample>,
    pub abort: Option<Abort>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryRecord> {
    let scenario = Scenario::from_config(cfg)?;
    if scenario.gain_check == GainCheckPolicy::Enforce {
        let cert = match scenario_certificate(&scenario) {
            Err(Error::Infeasible(msg)) => return Err(Error::GainCheck(msg)),
            other => other?,
        };
        if !cert.passed {
            return Err(Error::GainCheck(format!(
                "damping gains fail the certificate for agents {:?} (set gain_check to \"bypass\" to run anyway)",
                cert.failing_agents().iter().map(|i| i + 1).collect::<Vec<_>>()
            )));
        }
    }
    simulate(&scenario)
}

struct Workspace {
    delayed: Vec<f64>,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
}

/// Integrate a realized scenario. Gain policy is not consulted here.
pub fn simulate(scenario: &Scenario) -> Result<TrajectoryRecord> {
    let n = scenario.n_agents();
    let dim = scenario.dim();
    let len = n * dim;
    let h = scenario.step;
    if !(h > 0.0) || !(scenario.horizon > 0.0) || scenario.decimation == 0 {
        return Err(Error::param("step", "step, horizon and decimation must be positive"));
    }
    let steps = (scenario.horizon / h).round() as usize;
    let retention = scenario.bounds.max() + 4.0 * h;
    let mut histories: Vec<History> = (0..n).map(|_| History::new(dim, retention)).collect();
    for (i, hist) in histories.iter_mut().enumerate() {
        hist.record(0.0, &scenario.positions[i * dim..(i + 1) * dim])?;
    }

    let mut y = [scenario.positions.clone(), scenario.velocities.clone()].concat();
    let channels = scenario.graph.channels();
    let mut ws = Workspace {
        delayed: vec![0.0; channels.len() * dim],
        stage: vec![0.0; 2 * len],
        k: std::array::from_fn(|_| vec![0.0; 2 * len]),
    };
    let mut record = TrajectoryRecord {
        kind: scenario.kind,
        n_agents: n,
        dim,
        r: scenario.params.r,
        edges: scenario.graph.pairs(),
        channels: channels.iter().map(|c| (c.receiver, c.source)).collect(),
        samples: Vec::with_capacity(steps / scenario.decimation + 2),
        abort: None,
    };
    record.samples.push(sample(scenario, &histories, 0.0, &y)?);

    for step in 0..steps {
        let t = step as f64 * h;
        if let Err(e) = rk4_step(scenario, &histories, t, h, &mut y, &mut ws) {
            record.abort = Some(Abort::from_error(t, &e));
            break;
        }
        let t_next = (step + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            record.abort = Some(Abort {
                t: t_next,
                domain_breach: false,
                reason: "non-finite state".into(),
            });
            break;
        }
        for (i, hist) in histories.iter_mut().enumerate() {
            hist.record(t_next, &y[i * dim..(i + 1) * dim])?;
        }
        if (step + 1) % scenario.decimation == 0 || step + 1 == steps {
            match sample(scenario, &histories, t_next, &y) {
                Ok(s) => record.samples.push(s),
                Err(e) => {
                    record.abort = Some(Abort::from_error(t_next, &e));
                    break;
                }
            }
        }
    }
    Ok(record)
}

fn rk4_step(
    scenario: &Scenario,
    histories: &[History],
    t: f64,
    h: f64,
    y: &mut [f64],
    ws: &mut Workspace,
) -> Result<()> {
    let Workspace { delayed, stage, k } = ws;
    let nodes = [0.0, 0.5, 0.5, 1.0];
    for s in 0..4 {
        stage.copy_from_slice(y);
        if s > 0 {
            let c = nodes[s] * h;
            for (st, kp) in stage.iter_mut().zip(&k[s - 1]) {
                *st += c * kp;
            }
        }
        let (before, rest) = k.split_at_mut(s);
        let _ = before;
        derivative(scenario, histories, t, y, t + nodes[s] * h, stage, delayed, &mut rest[0])?;
    }
    for (i, v) in y.iter_mut().enumerate() {
        *v += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn derivative(
    scenario: &Scenario,
    histories: &[History],
    t_start: f64,
    y_start: &[f64],
    t_stage: f64,
    y_stage: &[f64],
    delayed: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let dim = scenario.dim();
    let len = scenario.n_agents() * dim;
    for (k, (c, profile)) in scenario.graph.channels().iter().zip(&scenario.profiles).enumerate() {
        let lookback = t_stage - profile.delay(t_stage);
        let slot = &mut delayed[k * dim..(k + 1) * dim];
        if lookback <= t_start {
            histories[c.source].query(lookback, slot)?;
        } else {
            let w = (lookback - t_start) / (t_stage - t_start);
            let span = c.source * dim..(c.source + 1) * dim;
            for ((o, a), b) in slot.iter_mut().zip(&y_start[span.clone()]).zip(&y_stage[span]) {
                *o = a + w * (b - a);
            }
        }
    }
    let (pos, vel) = y_stage.split_at(len);
    let (dpos, dvel) = out.split_at_mut(len);
    match (scenario.kind, &scenario.model) {
        (NetworkKind::EulerLagrange, Some(model)) => el_rhs(
            pos,
            vel,
            delayed,
            &scenario.gains,
            &scenario.params,
            model,
            &scenario.graph,
            dpos,
            dvel,
        ),
        _ => si_rhs(pos, vel, delayed, &scenario.gains, &scenario.params, &scenario.graph, dpos, dvel),
    }
}

fn sample(scenario: &Scenario, histories: &[History], t: f64, y: &[f64]) -> Result<Sample> {
    let dim = scenario.dim();
    let n = scenario.n_agents();
    let (pos, vel) = y.split_at(n * dim);
    let agent = |i: usize| &pos[i * dim..(i + 1) * dim];
    let distances: Vec<f64> = scenario
        .graph
        .edges()
        .iter()
        .map(|e| distance(agent(e.tail), agent(e.head)))
        .collect();
    let margin = distances
        .iter()
        .map(|d| scenario.params.r - d)
        .fold(f64::INFINITY, f64::min);
    let mut spread: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            spread = spread.max(distance(agent(i), agent(j)));
        }
    }
    let channels: &[Channel] = scenario.graph.channels();
    let mut delayed = vec![0.0; channels.len() * dim];
    for (k, (c, profile)) in channels.iter().zip(&scenario.profiles).enumerate() {
        histories[c.source].query_delayed(t, profile, &mut delayed[k * dim..(k + 1) * dim])?;
    }
    Ok(Sample {
        t,
        positions: pos.to_vec(),
        velocities: vel.to_vec(),
        lyapunov: lyapunov_value(scenario, pos, vel)?,
        spread,
        margin,
        distances,
        delayed,
    })
}

/// Absolute slack added to the relative Lyapunov bound so that V(0) = 0
/// runs are not flagged on rounding.
const LYAPUNOV_ABS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub v0: f64,
    /// `max_t V(t) − V(0)`.
    pub max_v_growth: f64,
    /// First sample where `V(t) > V(0)(1 + tol)`.
    pub v_violation_time: Option<f64>,
    pub min_margin: f64,
    /// First sample where an initial edge reached `r`.
    pub margin_violation_time: Option<f64>,
    pub final_spread: f64,
    pub consensus_reached: bool,
    pub abort: Option<Abort>,
    pub passed: bool,
}

pub fn monitors(record: &TrajectoryRecord, tol: &Tolerances) -> MonitorReport {
    let v0 = record.samples.first().map_or(0.0, |s| s.lyapunov);
    let limit = v0 * (1.0 + tol.lyapunov) + LYAPUNOV_ABS_SLACK;
    let mut max_v_growth = f64::NEG_INFINITY;
    let mut v_violation_time = None;
    let mut min_margin = f64::INFINITY;
    let mut margin_violation_time = None;
    for s in &record.samples {
        max_v_growth = max_v_growth.max(s.lyapunov - v0);
        if v_violation_time.is_none() && !(s.lyapunov <= limit) {
            v_violation_time = Some(s.t);
        }
        min_margin = min_margin.min(s.margin);
        if margin_violation_time.is_none() && !(s.margin > 0.0) {
            margin_violation_time = Some(s.t);
        }
    }
    if let Some(a) = record.abort.as_ref().filter(|a| a.domain_breach) {
        margin_violation_time.get_or_insert(a.t);
        min_margin = min_margin.min(0.0);
    }
    let final_spread = record.last().map_or(f64::NAN, |s| s.spread);
    let consensus_reached = final_spread < tol.consensus;
    let passed = record.abort.is_none()
        && v_violation_time.is_none()
        && margin_violation_time.is_none()
        && consensus_reached;
    MonitorReport {
        v0,
        max_v_growth,
        v_violation_time,
        min_margin,
        margin_violation_time,
        final_spread,
        consensus_reached,
        abort: record.abort.clone(),
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, SI_FIG1};

    fn short_si(horizon: f64) -> ScenarioConfig {
        let mut cfg = parse_config(SI_FIG1).unwrap().config;
        cfg.horizon = Some(horizon);
        cfg
    }

    #[test]
    fn initial_lyapunov_value() {
        let scenario = Scenario::from_config(&short_si(1.0)).unwrap();
        let v0 = lyapunov_value(&scenario, &scenario.positions, &scenario.velocities).unwrap();
        let expected = 2.0 * 0.25 / 0.95 + 2.0 * 0.36 / 0.84;
        assert!((v0 - expected).abs() < 1e-12);
        assert!((v0 - 1.38346).abs() < 1e-5);
        assert!(v0 < 5.0 * scenario.params.p);
    }

    #[test]
    fn coincident_agents_at_rest_have_zero_energy() {
        let text = r#"{"network":"single-integrator","positions":[[0.3],[0.3],[0.3]],"r":1,"epsilon":0.4,"q":0.2,
            "damping":[1,1,1],"delay":{"dbar":0.1},"gain_check":"bypass","horizon":0.5}"#;
        let cfg = parse_config(text).unwrap().config;
        let scenario = Scenario::from_config(&cfg).unwrap();
        assert_eq!(lyapunov_value(&scenario, &scenario.positions, &scenario.velocities).unwrap(), 0.0);
        let rec = simulate(&scenario).unwrap();
        assert!(rec.samples.iter().all(|s| s.lyapunov == 0.0 && s.positions == vec![0.3; 3]));
    }

    #[test]
    fn lone_single_integrator_stays_put() {
        let text = r#"{"network":"single-integrator","positions":[[0.7, -0.2]],"r":1,"epsilon":0.4,"q":0.2,
            "damping":[5],"delay":{"dbar":0.1},"gain_check":"bypass","horizon":1.0}"#;
        let rec = run_scenario(&parse_config(text).unwrap().config).unwrap();
        assert!(rec.edges.is_empty());
        for s in &rec.samples {
            assert_eq!(s.positions, vec![0.7, -0.2]);
            assert_eq!(s.margin, f64::INFINITY);
        }
    }

    #[test]
    fn lone_el_agent_settles() {
        let text = r#"{"network":"euler-lagrange","positions":[[0.4, -0.3]],"velocities":[[1.0, -2.0]],
            "r":1,"epsilon":0.4,"q":0.2,"p":0.01,"damping":[5],"delay":{"dbar":0.1},"gain_check":"bypass","horizon":10.0}"#;
        let rec = run_scenario(&parse_config(text).unwrap().config).unwrap();
        let last = rec.last().unwrap();
        assert!(last.velocities.iter().all(|v| v.abs() < 1e-6), "{:?}", last.velocities);
        // energy only decays
        for w in rec.samples.windows(2) {
            assert!(w[1].lyapunov <= w[0].lyapunov + 1e-12);
        }
    }

    #[test]
    fn enforced_gain_check_blocks_uncertified_runs() {
        let mut cfg = short_si(0.1);
        cfg.gain_check = Some(GainCheckPolicy::Enforce);
        assert!(matches!(run_scenario(&cfg), Err(Error::GainCheck(_))));
    }

    #[test]
    fn record_is_decimated_and_monotone() {
        let rec = run_scenario(&short_si(0.5)).unwrap();
        assert_eq!(rec.samples.len(), 51);
        assert!(rec.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert!((rec.last().unwrap().t - 0.5).abs() < 1e-12);
        assert_eq!(rec.channels.len(), 8);
    }

    #[test]
    fn margin_violation_is_timestamped() {
        let mut rec = run_scenario(&short_si(0.2)).unwrap();
        rec.samples[7].margin = -0.01;
        let m = monitors(&rec, &Tolerances { lyapunov: 1e-3, consensus: 1e-2 });
        assert_eq!(m.margin_violation_time, Some(rec.samples[7].t));
        assert!(m.min_margin < 0.0);
        assert!(!m.passed);
    }

    #[test]
    fn domain_breach_aborts_with_diagnostic() {
        // no damping to speak of and agents launched apart at high speed
        let text = r#"{"network":"single-integrator","positions":[[0.0],[0.5]],"velocities":[[-20.0],[20.0]],
            "r":1,"epsilon":0.4,"q":0.2,"damping":[1e-6,1e-6],"delay":{"dbar":0.1},"gain_check":"bypass","horizon":2.0}"#;
        let rec = run_scenario(&parse_config(text).unwrap().config).unwrap();
        let abort = rec.abort.as_ref().expect("run should abort");
        assert!(abort.reason.contains("potential domain"), "{}", abort.reason);
        assert!(abort.t < 2.0);
        let m = monitors(&rec, &Tolerances { lyapunov: 1e-3, consensus: 1e-2 });
        assert!(!m.passed);
        assert!(m.margin_violation_time.is_some());
    }
}
