//! Bounded connectivity potential `ψ(d) = d² / (r² − d² + Q)` and the
//! parameter calculus that makes it usable under delays: the ceiling on `Q`
//! that orders the initial energy below the boundary energy, the delay floor
//! on `Q` with its `(γ, η)` constants, the floor on `p` for networks that
//! start moving, and a joint `(Q, p, Δ)` search.

use serde::{Deserialize, Serialize};

use crate::graph::{Channel, CommGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    /// Broadcast radius (length).
    pub r: f64,
    /// Shape parameter (length²).
    pub q: f64,
    /// Buffer width of the initial configuration (length).
    pub epsilon: f64,
    pub n_agents: usize,
    /// Agent state dimension.
    pub dim: usize,
    /// Proportional gain.
    pub p: f64,
}

impl PotentialParams {
    pub fn new(r: f64, q: f64, epsilon: f64, n_agents: usize, dim: usize, p: f64) -> Result<Self> {
        let params = Self {
            r,
            q,
            epsilon,
            n_agents,
            dim,
            p,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param("r", format!("must be positive, got {}", self.r)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.r) {
            return Err(Error::param(
                "epsilon",
                format!("must satisfy 0 < epsilon < r, got {}", self.epsilon),
            ));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::param("q", format!("must be positive, got {}", self.q)));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must be positive, got {}", self.p)));
        }
        // a lone agent is allowed for simulation; the bounds below need N >= 2
        if self.n_agents == 0 {
            return Err(Error::param("n_agents", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        Ok(())
    }

    /// `sqrt(r² + Q)`: the potential has a pole there.
    pub fn domain_limit(&self) -> f64 {
        (self.r * self.r + self.q).sqrt()
    }

    /// `ψ(r) = r² / Q`.
    pub fn psi_at_r(&self) -> f64 {
        self.r * self.r / self.q
    }
}

fn denominator(dist_sq: f64, params: &PotentialParams) -> Result<f64> {
    let den = params.r * params.r - dist_sq + params.q;
    if den > 0.0 && dist_sq >= 0.0 && dist_sq.is_finite() {
        Ok(den)
    } else {
        Err(Error::PotentialDomain {
            dist: dist_sq.sqrt(),
            limit: params.domain_limit(),
        })
    }
}

pub fn psi(dist: f64, params: &PotentialParams) -> Result<f64> {
    if dist < 0.0 {
        return Err(Error::PotentialDomain {
            dist,
            limit: params.domain_limit(),
        });
    }
    let d2 = dist * dist;
    Ok(d2 / denominator(d2, params)?)
}

/// State-dependent coupling gain `h = 2(r² + Q) / (r² − d² + Q)²`.
pub fn coupling_gain(dist_sq: f64, params: &PotentialParams) -> Result<f64> {
    let den = denominator(dist_sq, params)?;
    Ok(2.0 * (params.r * params.r + params.q) / (den * den))
}

/// Gradient of `ψ(|xi − xj|)` with respect to `xi`.
pub fn grad_psi(xi: &[f64], xj: &[f64], params: &PotentialParams) -> Result<Vec<f64>> {
    let mut out = vec![0.0; xi.len()];
    add_scaled_grad(xi, xj, params, 1.0, &mut out)?;
    Ok(out)
}

/// `out += scale · ∇_i ψ(|xi − xj|)`, allocation-free.
pub(crate) fn add_scaled_grad(
    xi: &[f64],
    xj: &[f64],
    params: &PotentialParams,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
    let h = coupling_gain(d2, params)? * scale;
    for ((o, a), b) in out.iter_mut().zip(xi).zip(xj) {
        *o += h * (a - b);
    }
    Ok(())
}

/// Upper limit on `Q` that keeps `N(N−1)/2 · ψ(r − ε) < ψ(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QCeiling {
    /// Any positive `Q` works (`N(N−1) <= 2r²/(r−ε)²`).
    Unconstrained,
    /// `Q` must be strictly below this value.
    Below { value: f64 },
}

impl QCeiling {
    pub fn admits(&self, q: f64) -> bool {
        match *self {
            QCeiling::Unconstrained => q > 0.0,
            QCeiling::Below { value } => q > 0.0 && q < value,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            QCeiling::Unconstrained => None,
            QCeiling::Below { value } => Some(value),
        }
    }
}

fn check_counts(n_agents: usize, r: f64, epsilon: f64) -> Result<()> {
    if n_agents < 2 {
        return Err(Error::param("n_agents", "bounds need at least two agents"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("must be positive, got {r}")));
    }
    if !(epsilon > 0.0 && epsilon < r) {
        return Err(Error::param("epsilon", format!("must satisfy 0 < epsilon < r, got {epsilon}")));
    }
    Ok(())
}

pub fn q_upper_bound(n_agents: usize, r: f64, epsilon: f64) -> Result<QCeiling> {
    check_counts(n_agents, r, epsilon)?;
    let nn = (n_agents * (n_agents - 1)) as f64;
    let inner = (r - epsilon) * (r - epsilon);
    let r2 = r * r;
    if nn > 2.0 * r2 / inner {
        Ok(QCeiling::Below {
            value: 2.0 * r2 * (r2 - inner) / (nn * inner - 2.0 * r2),
        })
    } else {
        Ok(QCeiling::Unconstrained)
    }
}

/// Evaluates `N(N−1)/2 · ψ(r − ε) < ψ(r)` directly; returns both sides.
pub fn energy_ordering(params: &PotentialParams) -> Result<(f64, f64)> {
    let nn = (params.n_agents * params.n_agents.saturating_sub(1)) as f64;
    let lhs = 0.5 * nn * psi(params.r - params.epsilon, params)?;
    Ok((lhs, params.psi_at_r()))
}

/// `2pn²d̄²ψ(r) + 2nr·d̄·sqrt(2pψ(r))`: the part of the delay floor on `Q`
/// that does not depend on the slack `Δ`.
pub fn delay_floor_terms(params: &PotentialParams, dbar: f64) -> f64 {
    let n = params.dim as f64;
    let psi_r = params.psi_at_r();
    let speed = (2.0 * params.p * psi_r).sqrt();
    2.0 * params.p * n * n * dbar * dbar * psi_r + 2.0 * n * params.r * dbar * speed
}

/// Largest admissible slack `Δ` (may be non-positive when infeasible).
pub fn max_slack(params: &PotentialParams, dbar: f64) -> f64 {
    params.q - delay_floor_terms(params, dbar)
}

/// Constants bounding the delayed-gradient mismatch on the invariant set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayConstants {
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Floor on `Q` including `Δ`.
    pub q_floor: f64,
}

pub fn delay_constants(params: &PotentialParams, dbar_max: f64, delta: f64) -> Result<DelayConstants> {
    params.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    if !(dbar_max >= 0.0 && dbar_max.is_finite()) {
        return Err(Error::param("dbar", format!("must be non-negative, got {dbar_max}")));
    }
    let q_floor = delay_floor_terms(params, dbar_max) + delta;
    if params.q < q_floor {
        return Err(Error::Infeasible(format!(
            "Q = {} is below the delay floor {q_floor} (slack Δ = {delta}); largest admissible Δ is {}",
            params.q,
            max_slack(params, dbar_max)
        )));
    }
    let r = params.r;
    let q = params.q;
    let n = params.dim as f64;
    let s = r * r + q;
    let reach = 2.0 * r + n * dbar_max * (2.0 * params.p * params.psi_at_r()).sqrt();
    Ok(DelayConstants {
        delta,
        gamma: 2.0 * s / (delta * delta),
        eta: 4.0 * s * s * reach * n.sqrt() * r / (q * q * delta * delta),
        q_floor,
    })
}

/// Strict lower bound on `p` so that the initial energy sits below `pψ(r)`
/// given an initial kinetic-energy bound `ke0`.
pub fn p_lower_bound(ke0: f64, n_agents: usize, r: f64, epsilon: f64, q: f64) -> Result<f64> {
    check_counts(n_agents, r, epsilon)?;
    if !(ke0 >= 0.0 && ke0.is_finite()) {
        return Err(Error::param("ke0", format!("must be non-negative, got {ke0}")));
    }
    let params = PotentialParams::new(r, q, epsilon, n_agents, 1, 1.0)?;
    let nn = (n_agents * (n_agents - 1)) as f64;
    let den = 2.0 * params.psi_at_r() - nn * psi(r - epsilon, &params)?;
    if den <= 0.0 {
        return Err(Error::Infeasible(format!(
            "2ψ(r) − N(N−1)ψ(r−ε) = {den} is not positive; Q = {q} violates the ceiling"
        )));
    }
    Ok(2.0 * ke0 / den)
}

/// Largest `p` (exclusive) for which the delay floor stays below `Q`.
/// Infinite without delays.
pub fn p_upper_bound(q: f64, dim: usize, r: f64, dbar: f64) -> f64 {
    if dbar == 0.0 {
        return f64::INFINITY;
    }
    // floor(p) = A p + B sqrt(p), increasing in p
    let n = dim as f64;
    let psi_r = r * r / q;
    let a = 2.0 * n * n * dbar * dbar * psi_r;
    let b = 2.0 * n * r * dbar * (2.0 * psi_r).sqrt();
    let s = (-b + (b * b + 4.0 * a * q).sqrt()) / (2.0 * a);
    s * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInputs {
    pub n_agents: usize,
    pub dim: usize,
    pub r: f64,
    pub epsilon: f64,
    /// Largest delay bound over all channels (s).
    pub dbar: f64,
    /// Bound on the initial kinetic energy (J, or ½Σ|u|² for the filter state).
    pub ke0: f64,
}

/// Which inequality ruled a candidate out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    /// `Q` at or above the energy-ordering ceiling.
    QCeiling,
    /// `p` not above the initial-energy floor.
    PLowerBound,
    /// `Q` not above the delay floor for any `Δ > 0`.
    DelayFloor,
    /// No `Q` below the ceiling has a `p` window between the two bounds.
    NoPWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum FeasibilityReport {
    Feasible {
        q: f64,
        p: f64,
        delta: f64,
        delta_max: f64,
        gamma: f64,
        eta: f64,
        q_ceiling: QCeiling,
        p_min: f64,
        p_max: f64,
    },
    Infeasible {
        violated: Violation,
        detail: String,
    },
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityReport::Feasible { .. })
    }
}

const Q_GRID: usize = 400;
// search range when the ceiling does not bind, in units of r²
const Q_SEARCH_SPAN: f64 = 4.0;

/// Joint `(Q, p, Δ)` selection.
///
/// With a `candidate` `(Q, p)` the three bounds are checked for that pair
/// only. Without one, `Q` is scanned on a grid below the ceiling and the
/// pair with the widest `p` window (ratio `p_max / p_min`) wins; `p` is then
/// the geometric midpoint of the window. `Δ` is always half the available
/// slack.
pub fn feasibility_plan(inputs: &FeasibilityInputs, candidate: Option<(f64, f64)>) -> Result<FeasibilityReport> {
    check_counts(inputs.n_agents, inputs.r, inputs.epsilon)?;
    if inputs.dim == 0 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    if !(inputs.dbar >= 0.0 && inputs.dbar.is_finite()) {
        return Err(Error::param("dbar", format!("must be non-negative, got {}", inputs.dbar)));
    }
    if !(inputs.ke0 >= 0.0 && inputs.ke0.is_finite()) {
        return Err(Error::param("ke0", format!("must be non-negative, got {}", inputs.ke0)));
    }
    let ceiling = q_upper_bound(inputs.n_agents, inputs.r, inputs.epsilon)?;
    match candidate {
        Some((q, p)) => certify(inputs, ceiling, q, p),
        None => search(inputs, ceiling),
    }
}

fn certify(inputs: &FeasibilityInputs, ceiling: QCeiling, q: f64, p: f64) -> Result<FeasibilityReport> {
    if !(q > 0.0 && p > 0.0) {
        return Err(Error::param("candidate", format!("Q and p must be positive, got ({q}, {p})")));
    }
    if !ceiling.admits(q) {
        return Ok(FeasibilityReport::Infeasible {
            violated: Violation::QCeiling,
            detail: format!("Q = {q} is not below the ceiling {:?}", ceiling.value()),
        });
    }
    let p_min = p_lower_bound(inputs.ke0, inputs.n_agents, inputs.r, inputs.epsilon, q)?;
    if p <= p_min {
        return Ok(FeasibilityReport::Infeasible {
            violated: Violation::PLowerBound,
            detail: format!("p = {p} is not above the initial-energy floor {p_min}"),
        });
    }
    let params = PotentialParams::new(inputs.r, q, inputs.epsilon, inputs.n_agents, inputs.dim, p)?;
    let delta_max = max_slack(&params, inputs.dbar);
    if delta_max <= 0.0 {
        return Ok(FeasibilityReport::Infeasible {
            violated: Violation::DelayFloor,
            detail: format!(
                "Q = {q} does not exceed the delay floor {} at p = {p}",
                delay_floor_terms(&params, inputs.dbar)
            ),
        });
    }
    let constants = delay_constants(&params, inputs.dbar, 0.5 * delta_max)?;
    Ok(FeasibilityReport::Feasible {
        q,
        p,
        delta: constants.delta,
        delta_max,
        gamma: constants.gamma,
        eta: constants.eta,
        q_ceiling: ceiling,
        p_min,
        p_max: p_upper_bound(q, inputs.dim, inputs.r, inputs.dbar),
    })
}

fn search(inputs: &FeasibilityInputs, ceiling: QCeiling) -> Result<FeasibilityReport> {
    let top = ceiling.value().unwrap_or(Q_SEARCH_SPAN * inputs.r * inputs.r);
    let mut best: Option<(f64, f64, f64, f64)> = None; // (score, p_max, q, p_min)
    for k in 1..=Q_GRID {
        let q = top * k as f64 / (Q_GRID + 1) as f64;
        let p_min = p_lower_bound(inputs.ke0, inputs.n_agents, inputs.r, inputs.epsilon, q)?;
        let p_max = p_upper_bound(q, inputs.dim, inputs.r, inputs.dbar);
        if p_min >= p_max {
            continue;
        }
        let score = if p_min > 0.0 { (p_max / p_min).ln() } else { f64::INFINITY };
        let better = match best {
            None => true,
            Some((s, pm, bq, _)) => (score, p_max, q) > (s, pm, bq),
        };
        if better {
            best = Some((score, p_max, q, p_min));
        }
    }
    let Some((_, p_max, q, p_min)) = best else {
        return Ok(FeasibilityReport::Infeasible {
            violated: Violation::NoPWindow,
            detail: format!(
                "for every Q in (0, {top}) the initial-energy floor on p meets the delay ceiling on p"
            ),
        });
    };
    let p = match (p_min > 0.0, p_max.is_finite()) {
        (true, true) => (p_min * p_max).sqrt(),
        (false, true) => 0.5 * p_max,
        (true, false) => 2.0 * p_min,
        (false, false) => 1.0,
    };
    certify(inputs, ceiling, q, p)
}

/// Upper delay bound per directed channel, aligned with `CommGraph::channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBounds {
    per_channel: Vec<f64>,
}

impl DelayBounds {
    pub fn uniform(graph: &CommGraph, dbar: f64) -> Self {
        Self::from_fn(graph, |_| dbar)
    }

    pub fn from_fn(graph: &CommGraph, f: impl FnMut(&Channel) -> f64) -> Self {
        Self {
            per_channel: graph.channels().iter().map(f).collect(),
        }
    }

    pub fn from_vec(graph: &CommGraph, per_channel: Vec<f64>) -> Result<Self> {
        if per_channel.len() != graph.channels().len() {
            return Err(Error::Dimension(format!(
                "{} delay bounds for {} channels",
                per_channel.len(),
                graph.channels().len()
            )));
        }
        if let Some(d) = per_channel.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::param("dbar", format!("must be non-negative, got {d}")));
        }
        Ok(Self { per_channel })
    }

    pub fn channel(&self, k: usize) -> f64 {
        self.per_channel[k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.per_channel
    }

    /// Largest bound, 0 without channels.
    pub fn max(&self) -> f64 {
        self.per_channel.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest non-zero bound, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.per_channel
            .iter()
            .copied()
            .filter(|d| *d > 0.0)
            .min_by(f64::total_cmp)
    }
}
