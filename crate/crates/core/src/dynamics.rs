//! Agent models and the proportional-plus-damping control laws.
//!
//! Delayed neighbour positions are passed per incoming channel (see
//! [`CommGraph::channels`]); agent `i` uses its *current* position against
//! each neighbour's *delayed* one.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::graph::CommGraph;
use crate::potential::{add_scaled_grad, PotentialParams};
use crate::{Error, Result};

/// Per-agent positive diagonal damping and the common proportional gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub p: f64,
    /// Diagonal of `K_i` for each agent.
    pub damping: Vec<Vec<f64>>,
}

impl ControlGains {
    pub fn new(p: f64, damping: Vec<Vec<f64>>) -> Result<Self> {
        let gains = Self { p, damping };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must be positive, got {}", self.p)));
        }
        for (i, k) in self.damping.iter().enumerate() {
            if k.is_empty() || k.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::param(
                    "damping",
                    format!("agent {i}: diagonal entries must be positive, got {k:?}"),
                ));
            }
        }
        Ok(())
    }

    /// Smallest diagonal entry of `K_i`.
    pub fn k_min(&self, agent: usize) -> f64 {
        self.damping[agent].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p,
            damping: self.damping.iter().map(|k| k.iter().map(|v| v * factor).collect()).collect(),
        }
    }
}

/// Delayed neighbour positions, one `dim`-vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedPositions {
    dim: usize,
    data: Vec<f64>,
}

impl DelayedPositions {
    pub fn zeros(channels: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; channels * dim],
        }
    }

    /// Zero-delay view: every channel carries the source's current position.
    pub fn current(graph: &CommGraph, positions: &[Vec<f64>]) -> Self {
        let dim = positions.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(graph.channels().len() * dim);
        for c in graph.channels() {
            data.extend_from_slice(&positions[c.source]);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `out = −p Σ_j ∇_i ψ(|x_i − x_jd|)` over the channels agent `i` receives.
pub(crate) fn coupling_force(
    agent: usize,
    xi: &[f64],
    delayed: &[f64],
    dim: usize,
    graph: &CommGraph,
    params: &PotentialParams,
    out: &mut [f64],
) -> Result<()> {
    out.fill(0.0);
    for k in graph.channel_range(agent) {
        add_scaled_grad(xi, &delayed[k * dim..(k + 1) * dim], params, -params.p, out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiAgentState {
    pub x: Vec<f64>,
    /// Filter state, equal to the velocity.
    pub u: Vec<f64>,
}

/// Time derivatives `(ẋ, u̇)` for every agent; returned in the same shape.
pub fn si_closed_loop_derivative(
    states: &[SiAgentState],
    delayed: &DelayedPositions,
    gains: &ControlGains,
    params: &PotentialParams,
    graph: &CommGraph,
) -> Result<Vec<SiAgentState>> {
    let dim = params.dim;
    let n = states.len();
    check_shapes(n, dim, graph, delayed, gains)?;
    let mut pos = Vec::with_capacity(n * dim);
    let mut vel = Vec::with_capacity(n * dim);
    for s in states {
        if s.x.len() != dim || s.u.len() != dim {
            return Err(Error::Dimension(format!("agent state must have dimension {dim}")));
        }
        pos.extend_from_slice(&s.x);
        vel.extend_from_slice(&s.u);
    }
    let mut dpos = vec![0.0; n * dim];
    let mut dvel = vec![0.0; n * dim];
    si_rhs(&pos, &vel, delayed.as_slice(), gains, params, graph, &mut dpos, &mut dvel)?;
    Ok((0..n)
        .map(|i| SiAgentState {
            x: dpos[i * dim..(i + 1) * dim].to_vec(),
            u: dvel[i * dim..(i + 1) * dim].to_vec(),
        })
        .collect())
}

fn check_shapes(n: usize, dim: usize, graph: &CommGraph, delayed: &DelayedPositions, gains: &ControlGains) -> Result<()> {
    if graph.n_agents() != n || gains.damping.len() != n {
        return Err(Error::Dimension(format!(
            "{n} states, {} graph agents, {} damping entries",
            graph.n_agents(),
            gains.damping.len()
        )));
    }
    if delayed.as_slice().len() != graph.channels().len() * dim {
        return Err(Error::Dimension(format!(
            "expected {} delayed positions of dimension {dim}",
            graph.channels().len()
        )));
    }
    if gains.damping.iter().any(|k| k.len() != dim) {
        return Err(Error::Dimension(format!("damping diagonals must have length {dim}")));
    }
    Ok(())
}

/// Flat-slice form used by the integrator.
#[allow(clippy::too_many_arguments)]
pub(crate) fn si_rhs(
    pos: &[f64],
    vel: &[f64],
    delayed: &[f64],
    gains: &ControlGains,
    params: &PotentialParams,
    graph: &CommGraph,
    dpos: &mut [f64],
    dvel: &mut [f64],
) -> Result<()> {
    let dim = params.dim;
    dpos.copy_from_slice(vel);
    for i in 0..graph.n_agents() {
        let span = i * dim..(i + 1) * dim;
        coupling_force(i, &pos[span.clone()], delayed, dim, graph, params, &mut dvel[span.clone()])?;
        for ((dv, v), k) in dvel[span.clone()].iter_mut().zip(&vel[span.clone()]).zip(&gains.damping[i]) {
            *dv -= k * v;
        }
    }
    Ok(())
}

/// Two-link planar arm with point masses at the distal end of each link,
/// joint angles measured from the horizontal, gravity along −y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElModel {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub gravity: f64,
}

impl Default for ElModel {
    fn default() -> Self {
        Self {
            m1: 0.5,
            m2: 0.5,
            l1: 1.0,
            l2: 1.0,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElAgentState {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElMatrices {
    pub mass: Matrix2<f64>,
    pub coriolis: Matrix2<f64>,
    pub gravity: Vector2<f64>,
}

impl ElModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m1", self.m1), ("m2", self.m2), ("l1", self.l1), ("l2", self.l2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param("el_model", format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::param("el_model", format!("gravity must be non-negative, got {}", self.gravity)));
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: [f64; 2]) -> Matrix2<f64> {
        let Self { m1, m2, l1, l2, .. } = *self;
        let b = m2 * l1 * l2 * q[1].cos();
        let m22 = m2 * l2 * l2;
        let m12 = m22 + b;
        let m11 = (m1 + m2) * l1 * l1 + m22 + 2.0 * b;
        Matrix2::new(m11, m12, m12, m22)
    }

    /// Coriolis/centrifugal matrix from the Christoffel symbols of `M`.
    pub fn coriolis_matrix(&self, q: [f64; 2], qdot: [f64; 2]) -> Matrix2<f64> {
        let h = -self.m2 * self.l1 * self.l2 * q[1].sin();
        Matrix2::new(h * qdot[1], h * (qdot[0] + qdot[1]), -h * qdot[0], 0.0)
    }

    pub fn gravity_torque(&self, q: [f64; 2]) -> Vector2<f64> {
        let Self { m1, m2, l1, l2, gravity } = *self;
        let c12 = (q[0] + q[1]).cos();
        Vector2::new(
            (m1 + m2) * gravity * l1 * q[0].cos() + m2 * gravity * l2 * c12,
            m2 * gravity * l2 * c12,
        )
    }

    /// Gravity potential whose gradient is [`Self::gravity_torque`].
    pub fn potential_energy(&self, q: [f64; 2]) -> f64 {
        let Self { m1, m2, l1, l2, gravity } = *self;
        (m1 + m2) * gravity * l1 * q[0].sin() + m2 * gravity * l2 * (q[0] + q[1]).sin()
    }

    pub fn kinetic_energy(&self, state: &ElAgentState) -> f64 {
        let v = Vector2::from(state.qdot);
        0.5 * v.dot(&(self.mass_matrix(state.q) * v))
    }

    /// Extreme eigenvalues of `M` over a uniform sweep of the elbow angle
    /// (`M` does not depend on the shoulder angle).
    pub fn inertia_bounds(&self, samples: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..samples.max(1) {
            let q2 = 2.0 * std::f64::consts::PI * k as f64 / samples.max(1) as f64;
            let eig = self.mass_matrix([0.0, q2]).symmetric_eigenvalues();
            lo = lo.min(eig.min());
            hi = hi.max(eig.max());
        }
        (lo, hi)
    }
}

pub fn el_matrices(model: &ElModel, state: &ElAgentState) -> ElMatrices {
    ElMatrices {
        mass: model.mass_matrix(state.q),
        coriolis: model.coriolis_matrix(state.q, state.qdot),
        gravity: model.gravity_torque(state.q),
    }
}

/// `τ_i = −p Σ_j ∇_i ψ(|x_i − x_jd|) − K_i ẋ_i + g_i(x_i)`.
pub fn el_control(
    agent: usize,
    state: &ElAgentState,
    delayed: &DelayedPositions,
    gains: &ControlGains,
    params: &PotentialParams,
    model: &ElModel,
    graph: &CommGraph,
) -> Result<Vector2<f64>> {
    if params.dim != 2 || delayed.dim() != 2 || gains.damping[agent].len() != 2 {
        return Err(Error::Dimension("Euler-Lagrange agents have two joints".into()));
    }
    let mut force = [0.0; 2];
    coupling_force(agent, &state.q, delayed.as_slice(), 2, graph, params, &mut force)?;
    let k = &gains.damping[agent];
    let g = model.gravity_torque(state.q);
    Ok(Vector2::new(
        force[0] - k[0] * state.qdot[0] + g[0],
        force[1] - k[1] * state.qdot[1] + g[1],
    ))
}

/// `q̈ = M⁻¹(τ − C q̇ − g)`.
pub fn el_forward_dynamics(model: &ElModel, state: &ElAgentState, tau: Vector2<f64>) -> Vector2<f64> {
    let m = el_matrices(model, state);
    let rhs = tau - m.coriolis * Vector2::from(state.qdot) - m.gravity;
    // M is 2×2 SPD; solve by the explicit inverse
    let det = m.mass[(0, 0)] * m.mass[(1, 1)] - m.mass[(0, 1)] * m.mass[(1, 0)];
    Vector2::new(
        (m.mass[(1, 1)] * rhs[0] - m.mass[(0, 1)] * rhs[1]) / det,
        (m.mass[(0, 0)] * rhs[1] - m.mass[(1, 0)] * rhs[0]) / det,
    )
}

/// Flat-slice closed loop for the integrator: gravity cancels exactly, so
/// `M q̈ = −p Σ∇ψ − K q̇ − C q̇`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn el_rhs(
    pos: &[f64],
    vel: &[f64],
    delayed: &[f64],
    gains: &ControlGains,
    params: &PotentialParams,
    model: &ElModel,
    graph: &CommGraph,
    dpos: &mut [f64],
    dvel: &mut [f64],
) -> Result<()> {
    dpos.copy_from_slice(vel);
    let mut force = [0.0; 2];
    for i in 0..graph.n_agents() {
        let q = [pos[2 * i], pos[2 * i + 1]];
        let qdot = [vel[2 * i], vel[2 * i + 1]];
        coupling_force(i, &q, delayed, 2, graph, params, &mut force)?;
        let k = &gains.damping[i];
        let g = model.gravity_torque(q);
        let tau = Vector2::new(
            force[0] - k[0] * qdot[0] + g[0],
            force[1] - k[1] * qdot[1] + g[1],
        );
        let acc = el_forward_dynamics(model, &ElAgentState { q, qdot }, tau);
        dvel[2 * i] = acc[0];
        dvel[2 * i + 1] = acc[1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_agents() -> (CommGraph, PotentialParams) {
        (
            CommGraph::new(2, [(0, 1)]).unwrap(),
            PotentialParams::new(1.0, 0.2, 0.4, 2, 1, 1.0).unwrap(),
        )
    }

    #[test]
    fn coincident_agents_at_rest_are_equilibrium() {
        let g = CommGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let pp = PotentialParams::new(1.0, 0.2, 0.4, 3, 2, 1.0).unwrap();
        let gains = ControlGains::new(1.0, vec![vec![1.0, 2.0]; 3]).unwrap();
        let states = vec![
            SiAgentState {
                x: vec![0.4, -0.1],
                u: vec![0.0, 0.0]
            };
            3
        ];
        let positions: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        let d = si_closed_loop_derivative(&states, &DelayedPositions::current(&g, &positions), &gains, &pp, &g).unwrap();
        for s in d {
            assert_eq!(s.x, vec![0.0, 0.0]);
            assert_eq!(s.u, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn two_agent_action_reaction() {
        let (g, pp) = two_agents();
        let gains = ControlGains::new(1.0, vec![vec![1.0]; 2]).unwrap();
        let states = vec![
            SiAgentState { x: vec![0.0], u: vec![0.0] },
            SiAgentState { x: vec![0.5], u: vec![0.0] },
        ];
        let delayed = DelayedPositions::current(&g, &[vec![0.0], vec![0.5]]);
        let d = si_closed_loop_derivative(&states, &delayed, &gains, &pp, &g).unwrap();
        let expected = 0.5 * 2.4 / 0.9025;
        assert!((d[0].u[0] - expected).abs() < 1e-12);
        assert!((d[1].u[0] + expected).abs() < 1e-12);
        assert_eq!(d[0].x, vec![0.0]);
    }

    #[test]
    fn delayed_equal_to_current_matches_undelayed() {
        let (g, pp) = two_agents();
        let gains = ControlGains::new(1.0, vec![vec![3.0]; 2]).unwrap();
        let states = vec![
            SiAgentState { x: vec![0.1], u: vec![0.2] },
            SiAgentState { x: vec![0.7], u: vec![-0.3] },
        ];
        let mut delayed = DelayedPositions::zeros(2, 1);
        delayed.channel_mut(0).copy_from_slice(&[0.7]);
        delayed.channel_mut(1).copy_from_slice(&[0.1]);
        let a = si_closed_loop_derivative(&states, &delayed, &gains, &pp, &g).unwrap();
        let b = si_closed_loop_derivative(&states, &DelayedPositions::current(&g, &[vec![0.1], vec![0.7]]), &gains, &pp, &g)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_positive_damping() {
        assert!(ControlGains::new(1.0, vec![vec![0.0]]).is_err());
        assert!(ControlGains::new(1.0, vec![vec![-1.0, 1.0]]).is_err());
        assert!(ControlGains::new(0.0, vec![vec![1.0]]).is_err());
    }

    #[test]
    fn mass_matrix_at_straight_elbow() {
        let m = ElModel::default().mass_matrix([0.3, 0.0]);
        assert!((m - Matrix2::new(2.5, 1.0, 1.0, 0.5)).abs().max() < 1e-15);
    }

    #[test]
    fn gravity_at_horizontal() {
        let g = ElModel::default().gravity_torque([0.0, 0.0]);
        assert!((g[0] - 14.715).abs() < 1e-12);
        assert!((g[1] - 4.905).abs() < 1e-12);
    }

    #[test]
    fn control_cancels_gravity_at_rest() {
        let g = CommGraph::new(2, [(0, 1)]).unwrap();
        let pp = PotentialParams::new(1.0, 0.2, 0.4, 2, 2, 0.01).unwrap();
        let gains = ControlGains::new(0.01, vec![vec![360.0, 360.0]; 2]).unwrap();
        let model = ElModel::default();
        let state = ElAgentState {
            q: [0.4, -1.1],
            qdot: [0.0, 0.0],
        };
        let delayed = DelayedPositions::current(&g, &[state.q.to_vec(), state.q.to_vec()]);
        let tau = el_control(0, &state, &delayed, &gains, &pp, &model, &g).unwrap();
        assert_eq!(tau, model.gravity_torque(state.q));
    }

    #[test]
    fn isolated_agent_is_pure_damping() {
        let g = CommGraph::new(1, []).unwrap();
        let pp = PotentialParams::new(1.0, 0.2, 0.4, 1, 2, 0.01).unwrap();
        let gains = ControlGains::new(0.01, vec![vec![3.0, 5.0]]).unwrap();
        let model = ElModel::default();
        let state = ElAgentState {
            q: [0.2, 0.3],
            qdot: [0.5, -1.0],
        };
        let tau = el_control(0, &state, &DelayedPositions::zeros(0, 2), &gains, &pp, &model, &g).unwrap();
        let residual = tau - model.gravity_torque(state.q);
        assert!((residual[0] + 1.5).abs() < 1e-12);
        assert!((residual[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn el_gradient_term_matches_si() {
        // joint-space separation (0.5, 0) reproduces the scalar example
        let g = CommGraph::new(2, [(0, 1)]).unwrap();
        let pp = PotentialParams::new(1.0, 0.2, 0.4, 2, 2, 1.0).unwrap();
        let gains = ControlGains::new(1.0, vec![vec![1.0, 1.0]; 2]).unwrap();
        let model = ElModel { gravity: 0.0, ..ElModel::default() };
        let a = ElAgentState { q: [0.5, 0.0], qdot: [0.0; 2] };
        let delayed = DelayedPositions::current(&g, &[vec![0.5, 0.0], vec![0.0, 0.0]]);
        let tau = el_control(0, &a, &delayed, &gains, &pp, &model, &g).unwrap();
        assert!((tau[0] + 0.5 * 2.4 / 0.9025).abs() < 1e-12);
        assert_eq!(tau[1], 0.0);
    }

    #[test]
    fn forward_dynamics_balance() {
        let model = ElModel::default();
        let state = ElAgentState {
            q: [0.3, -0.8],
            qdot: [1.2, -0.4],
        };
        let m = el_matrices(&model, &state);
        let tau = m.coriolis * Vector2::from(state.qdot) + m.gravity;
        assert!(el_forward_dynamics(&model, &state, tau).norm() < 1e-12);

        let free = ElModel { gravity: 0.0, ..model };
        let rest = ElAgentState { q: [0.3, -0.8], qdot: [0.0; 2] };
        assert_eq!(el_forward_dynamics(&free, &rest, Vector2::zeros()), Vector2::zeros());
    }

    #[test]
    fn inertia_bounds_positive() {
        let model = ElModel::default();
        let (lo, hi) = model.inertia_bounds(720);
        assert!(lo > 0.0 && hi < 4.0);
        for k in 0..720 {
            let m = model.mass_matrix([0.0, k as f64 * 0.00873]);
            let floor = m.determinant() / m.trace();
            assert!(m.symmetric_eigenvalues().min() >= floor - 1e-12);
        }
    }
}
