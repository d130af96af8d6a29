//! Numeric checks of the delay inequalities and the damping-gain
//! certificate.
//!
//! The certificate bound for agent `i` is
//! `B_i = Σ_{j ∈ N_i(0)} [ α_ij p(γ+η)/2 + p(γ+nη) d̄_ij² / (2 α_ji) ]`
//! for both network kinds; only `(p, n)` differ. The matrix `Φ` with
//! `φ_ii = k_i − Σ_j α_ij p(γ+η)/2` and `φ_ij = −p(γ+nη) d̄_ji² / (2 α_ij)`
//! has column sums `k_i − B_i`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::NetworkKind;
use crate::dynamics::ControlGains;
use crate::graph::CommGraph;
use crate::potential::{delay_constants, grad_psi, max_slack, DelayBounds, DelayConstants, PotentialParams};
use crate::simulator::{Scenario, TrajectoryRecord};
use crate::{Error, Result};

/// Floor applied to optimized `α` when the delay bound of an edge is zero.
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub kind: NetworkKind,
    pub p: f64,
    pub dim: usize,
    pub constants: DelayConstants,
    /// Smallest eigenvalue of each damping matrix.
    pub k: Vec<f64>,
    /// Right-hand side `B_i` per agent.
    pub bounds: Vec<f64>,
    /// `α_ij` per channel (receiver `i`, source `j`), aligned with the graph.
    pub alphas: Vec<f64>,
    pub agent_passes: Vec<bool>,
    #[serde(skip)]
    pub phi: DMatrix<f64>,
    pub column_sums: Vec<f64>,
    pub passed: bool,
}

impl GainCertificate {
    pub fn failing_agents(&self) -> Vec<usize> {
        self.agent_passes
            .iter()
            .enumerate()
            .filter(|(_, ok)| !**ok)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn columns_positive(&self) -> bool {
        self.column_sums.iter().all(|c| *c > 0.0)
    }
}

/// Index of channel `receiver ← source`.
fn channel_index(graph: &CommGraph, receiver: usize, source: usize) -> Option<usize> {
    let range = graph.channel_range(receiver);
    graph.incoming(receiver).iter().position(|c| c.source == source).map(|k| range.start + k)
}

/// `α* = d̄·sqrt((γ+nη)/(γ+η))` per channel, floored at [`ALPHA_FLOOR`].
/// Minimizes `aα + b/α` with `a = p(γ+η)/2`, `b = p(γ+nη)d̄²/2`.
pub fn optimize_alpha(gamma: f64, eta: f64, dim: usize, bounds: &DelayBounds) -> Vec<f64> {
    let ratio = ((gamma + dim as f64 * eta) / (gamma + eta)).sqrt();
    bounds.as_slice().iter().map(|d| (d * ratio).max(ALPHA_FLOOR)).collect()
}

/// Minimizer and minimum of `aα + b/α` over `α > 0`.
pub fn alpha_minimizer(a: f64, b: f64) -> (f64, f64) {
    let alpha = (b / a).sqrt();
    (alpha, 2.0 * (a * b).sqrt())
}

/// Builds the certificate. With `alphas = None` the optimized `α*` is used.
pub fn gain_bound(
    kind: NetworkKind,
    gains: &ControlGains,
    params: &PotentialParams,
    bounds: &DelayBounds,
    constants: &DelayConstants,
    graph: &CommGraph,
    alphas: Option<&[f64]>,
) -> Result<GainCertificate> {
    let n_agents = graph.n_agents();
    let channels = graph.channels();
    if gains.damping.len() != n_agents {
        return Err(Error::Dimension(format!(
            "{} damping matrices for {n_agents} agents",
            gains.damping.len()
        )));
    }
    if bounds.as_slice().len() != channels.len() {
        return Err(Error::Dimension(format!(
            "{} delay bounds for {} channels",
            bounds.as_slice().len(),
            channels.len()
        )));
    }
    let alphas = match alphas {
        Some(a) => {
            if a.len() != channels.len() {
                return Err(Error::Dimension(format!("{} alphas for {} channels", a.len(), channels.len())));
            }
            if let Some(bad) = a.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::param("alpha", format!("must be positive, got {bad}")));
            }
            a.to_vec()
        }
        None => optimize_alpha(constants.gamma, constants.eta, params.dim, bounds),
    };
    let p = params.p;
    let n = params.dim as f64;
    let (gamma, eta) = (constants.gamma, constants.eta);
    let direct = p * (gamma + eta) / 2.0;
    let cross = |dbar: f64, alpha: f64| p * (gamma + n * eta) * dbar * dbar / (2.0 * alpha);

    let k: Vec<f64> = (0..n_agents).map(|i| gains.k_min(i)).collect();
    let mut bounds_b = vec![0.0; n_agents];
    let mut phi = DMatrix::zeros(n_agents, n_agents);
    for i in 0..n_agents {
        phi[(i, i)] = k[i];
    }
    for (idx, c) in channels.iter().enumerate() {
        let (i, j) = (c.receiver, c.source);
        let reverse = channel_index(graph, j, i)
            .ok_or_else(|| Error::InvalidGraph(format!("channel {j} <- {i} missing")))?;
        // α_ij enters B_i directly, and B_i's cross term uses α_ji and d̄_ij
        bounds_b[i] += alphas[idx] * direct + cross(bounds.channel(idx), alphas[reverse]);
        phi[(i, i)] -= alphas[idx] * direct;
        // φ_ij = −p(γ+nη) d̄_ji² / (2 α_ij)
        phi[(i, j)] = -cross(bounds.channel(reverse), alphas[idx]);
    }
    let column_sums: Vec<f64> = (0..n_agents).map(|c| phi.column(c).sum()).collect();
    let agent_passes: Vec<bool> = k.iter().zip(&bounds_b).map(|(k, b)| k > b).collect();
    let passed = agent_passes.iter().all(|x| *x);
    Ok(GainCertificate {
        kind,
        p,
        dim: params.dim,
        constants: *constants,
        k,
        bounds: bounds_b,
        alphas,
        agent_passes,
        phi,
        column_sums,
        passed,
    })
}

/// Delay constants for a scenario with `Δ` at half the available slack.
pub fn scenario_constants(params: &PotentialParams, bounds: &DelayBounds) -> Result<DelayConstants> {
    let dbar = bounds.max();
    let slack = max_slack(params, dbar);
    if slack <= 0.0 {
        return Err(Error::Infeasible(format!(
            "Q = {} leaves no slack above the delay floor at dbar = {dbar} (slack {slack})",
            params.q
        )));
    }
    delay_constants(params, dbar, 0.5 * slack)
}

/// Certificate for a realized scenario with optimized `α`.
pub fn scenario_certificate(scenario: &Scenario) -> Result<GainCertificate> {
    let constants = scenario_constants(&scenario.params, &scenario.bounds)?;
    gain_bound(
        scenario.kind,
        &scenario.gains,
        &scenario.params,
        &scenario.bounds,
        &constants,
        &scenario.graph,
        None,
    )
}

/// Uniformly sampled signal starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub step: f64,
    pub dim: usize,
    /// `len × dim`, row-major by sample.
    pub values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(step: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("step", format!("must be positive, got {step}")));
        }
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!("{} values do not form {dim}-vectors", values.len())));
        }
        Ok(Self { step, dim, values })
    }

    pub fn from_fn(step: f64, len: usize, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; len * dim];
        for (k, row) in values.chunks_mut(dim).enumerate() {
            f(k as f64 * step, row);
        }
        Self::new(step, dim, values)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        (self.len() - 1) as f64 * self.step
    }
}

/// Value of a signal before `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreHistory {
    Zero,
    Hold,
}

/// `∫_a^b y` for the piecewise-linear interpolant of `y`, per component.
struct Antiderivative<'a> {
    y: &'a SampledSignal,
    cumulative: Vec<f64>,
    pre: PreHistory,
}

impl<'a> Antiderivative<'a> {
    fn new(y: &'a SampledSignal, pre: PreHistory) -> Self {
        let dim = y.dim;
        let mut cumulative = vec![0.0; y.values.len()];
        for k in 1..y.len() {
            for c in 0..dim {
                cumulative[k * dim + c] =
                    cumulative[(k - 1) * dim + c] + 0.5 * y.step * (y.sample(k - 1)[c] + y.sample(k)[c]);
            }
        }
        Self { y, cumulative, pre }
    }

    /// `∫_0^s y` (negative for `s < 0` under a held pre-history).
    fn at(&self, s: f64, c: usize) -> f64 {
        let dim = self.y.dim;
        let h = self.y.step;
        if s <= 0.0 {
            return match self.pre {
                PreHistory::Zero => 0.0,
                PreHistory::Hold => s * self.y.sample(0)[c],
            };
        }
        let last = self.y.len() - 1;
        let k = ((s / h).floor() as usize).min(last.saturating_sub(1));
        let tau = s - k as f64 * h;
        let a = self.y.sample(k)[c];
        let b = if k < last { self.y.sample(k + 1)[c] } else { a };
        self.cumulative[k * dim + c] + a * tau + (b - a) * tau * tau / (2.0 * h)
    }

    fn window(&self, from: f64, to: f64, c: usize) -> f64 {
        self.at(to, c) - self.at(from, c)
    }
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, .., last] => h * (values.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}

fn squared_norm(x: &SampledSignal) -> f64 {
    let sq: Vec<f64> = (0..x.len()).map(|k| x.sample(k).iter().map(|v| v * v).sum()).collect();
    trapezoid(&sq, x.step)
}

fn check_grid(x: &SampledSignal, y: &SampledSignal, d: &[f64], dbar: f64, alpha: f64) -> Result<()> {
    if x.len() != y.len() || x.len() != d.len() || x.dim != y.dim || x.step != y.step {
        return Err(Error::GridMismatch(format!(
            "x: {}×{} at {}, y: {}×{} at {}, d: {}",
            x.len(),
            x.dim,
            x.step,
            y.len(),
            y.dim,
            y.step,
            d.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    if let Some(bad) = d.iter().find(|v| !(**v >= 0.0 && **v <= dbar)) {
        return Err(Error::param("d", format!("delay {bad} outside [0, {dbar}]")));
    }
    Ok(())
}

/// Both sides of an integral inequality and `rhs − lhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl Residual {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            residual: rhs - lhs,
        }
    }

    /// `residual / |rhs|` (the raw residual when `rhs = 0`).
    pub fn normalized(&self) -> f64 {
        if self.rhs.abs() > 0.0 {
            self.residual / self.rhs.abs()
        } else {
            self.residual
        }
    }
}

/// `2∫_0^t xᵀ(σ)∫_{−d(σ)}^0 y(σ+θ)dθ dσ ≤ α‖x‖² + (d̄²/α)‖y‖²`.
pub fn lemma1_check(
    x: &SampledSignal,
    y: &SampledSignal,
    d: &[f64],
    dbar: f64,
    alpha: f64,
    pre: PreHistory,
) -> Result<Residual> {
    check_grid(x, y, d, dbar, alpha)?;
    let anti = Antiderivative::new(y, pre);
    let integrand: Vec<f64> = (0..x.len())
        .map(|k| {
            let s = k as f64 * x.step;
            x.sample(k)
                .iter()
                .enumerate()
                .map(|(c, xc)| xc * anti.window(s - d[k], s, c))
                .sum()
        })
        .collect();
    let lhs = 2.0 * trapezoid(&integrand, x.step);
    let rhs = alpha * squared_norm(x) + dbar * dbar / alpha * squared_norm(y);
    Ok(Residual::new(lhs, rhs))
}

/// `∫_0^t xᵀ(σ) ȳ(σ) 1 dσ ≤ (α/2)‖x‖² + (n d̄²/2α)‖y‖²` with
/// `ȳ(σ) = max_c |∫_{σ−d(σ)}^σ y_c|`.
pub fn prop2_check(
    x: &SampledSignal,
    y: &SampledSignal,
    d: &[f64],
    dbar: f64,
    alpha: f64,
    pre: PreHistory,
) -> Result<Residual> {
    check_grid(x, y, d, dbar, alpha)?;
    let anti = Antiderivative::new(y, pre);
    let integrand: Vec<f64> = (0..x.len())
        .map(|k| {
            let s = k as f64 * x.step;
            let ybar = (0..y.dim)
                .map(|c| anti.window(s - d[k], s, c).abs())
                .fold(0.0, f64::max);
            x.sample(k).iter().sum::<f64>() * ybar
        })
        .collect();
    let lhs = trapezoid(&integrand, x.step);
    let n = x.dim as f64;
    let rhs = 0.5 * alpha * squared_norm(x) + n * dbar * dbar / (2.0 * alpha) * squared_norm(y);
    Ok(Residual::new(lhs, rhs))
}

/// Composite trapezoid error bound `t h² max|f''| / 12`.
pub fn trapezoid_error_bound(horizon: f64, step: f64, second_derivative_bound: f64) -> f64 {
    horizon * step * step * second_derivative_bound / 12.0
}

/// Constant signals `x = y = c`, `d = d̄`, `α = d̄`, held pre-history: both
/// sides of the lemma equal `2|c|²d̄t`. Returns the residual and the
/// quadrature error bound it must stay below (zero curvature, so only
/// rounding remains).
pub fn lemma1_equality_case(c: &[f64], dbar: f64, step: f64, len: usize) -> Result<(Residual, f64)> {
    let x = SampledSignal::from_fn(step, len, c.len(), |_, row| row.copy_from_slice(c))?;
    let d = vec![dbar; len];
    let res = lemma1_check(&x, &x, &d, dbar, dbar, PreHistory::Hold)?;
    let rounding = 1e2 * f64::EPSILON * len as f64 * res.rhs.abs();
    Ok((res, trapezoid_error_bound(x.horizon(), step, 0.0) + rounding))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub instances: usize,
    pub seed: u64,
    /// Smallest `residual / |rhs|` seen.
    pub min_normalized_residual: f64,
    pub failures: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative tolerance for the randomized inequality suites.
pub const SUITE_TOLERANCE: f64 = 1e-8;

const SUITE_STEP: f64 = 0.01;
const SUITE_LEN: usize = 401;

/// A random smooth signal: a few sinusoids per component.
fn random_signal(rng: &mut ChaCha8Rng, dim: usize) -> SampledSignal {
    let terms: Vec<Vec<(f64, f64, f64)>> = (0..dim)
        .map(|_| {
            (0..3)
                .map(|_| {
                    (
                        rng.random_range(-2.0..2.0),
                        rng.random_range(0.0..3.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect()
        })
        .collect();
    SampledSignal::from_fn(SUITE_STEP, SUITE_LEN, dim, |t, row| {
        for (v, comp) in row.iter_mut().zip(&terms) {
            *v = comp.iter().map(|(a, w, ph)| a * (w * t + ph).sin()).sum();
        }
    })
    .expect("suite grid is valid")
}

type Check = fn(&SampledSignal, &SampledSignal, &[f64], f64, f64, PreHistory) -> Result<Residual>;

fn run_suite(name: &str, check: Check, instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_normalized = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..instances {
        let dim = rng.random_range(1..=3);
        let x = random_signal(&mut rng, dim);
        let y = random_signal(&mut rng, dim);
        let dbar: f64 = rng.random_range(0.01..0.5);
        let freq: f64 = rng.random_range(0.1..3.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let d: Vec<f64> = (0..SUITE_LEN)
            .map(|k| {
                let t = k as f64 * SUITE_STEP;
                (0.5 * dbar * (1.0 + (std::f64::consts::TAU * freq * t + phase).sin())).clamp(0.0, dbar)
            })
            .collect();
        let alpha = 10f64.powf(rng.random_range(-2.0..2.0));
        let res = check(&x, &y, &d, dbar, alpha, PreHistory::Zero)?;
        let normalized = res.normalized();
        min_normalized = min_normalized.min(normalized);
        if normalized < -SUITE_TOLERANCE {
            failures += 1;
        }
    }
    Ok(SuiteReport {
        name: name.into(),
        instances,
        seed,
        min_normalized_residual: min_normalized,
        failures,
        tolerance: SUITE_TOLERANCE,
        passed: failures == 0,
    })
}

pub fn lemma1_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    run_suite("lemma-l1", lemma1_check, instances, seed)
}

pub fn prop2_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    run_suite("delayed-integral-bound", prop2_check, instances, seed)
}

/// Outcome of the componentwise delayed-gradient bound along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundReport {
    pub samples: usize,
    pub checks: usize,
    /// Checks whose preconditions (`V ≤ V(0) < pψ(r)`, delayed offset
    /// within `n d̄ sqrt(2pψ(r))`) did not hold.
    pub precondition_failures: usize,
    pub violations: usize,
    pub first_violation_time: Option<f64>,
    /// Largest `lhs / rhs` over all components.
    pub max_ratio: f64,
    pub passed: bool,
}

/// For every sample and channel `i ← j`, checks
/// `|∇_iψ(x_i − x_j) − ∇_iψ(x_i − x_j^d)|_c ≤ γ|x_j − x_j^d|_c + η max|x_j − x_j^d|`.
pub fn gradient_bound_along(
    record: &TrajectoryRecord,
    params: &PotentialParams,
    constants: &DelayConstants,
    dbar: f64,
) -> GradientBoundReport {
    let dim = record.dim;
    let v0 = record.samples.first().map_or(0.0, |s| s.lyapunov);
    let energy_cap = params.p * params.psi_at_r();
    let offset_cap = dim as f64 * dbar * (2.0 * params.p * params.psi_at_r()).sqrt();
    let mut report = GradientBoundReport {
        samples: record.samples.len(),
        checks: 0,
        precondition_failures: 0,
        violations: 0,
        first_violation_time: None,
        max_ratio: 0.0,
        passed: true,
    };
    let mut offset = vec![0.0; dim];
    for s in &record.samples {
        for (k, &(i, j)) in record.channels.iter().enumerate() {
            report.checks += 1;
            let xi = &s.positions[i * dim..(i + 1) * dim];
            let xj = &s.positions[j * dim..(j + 1) * dim];
            let xjd = &s.delayed[k * dim..(k + 1) * dim];
            for ((o, a), b) in offset.iter_mut().zip(xj).zip(xjd) {
                *o = a - b;
            }
            let max_off = offset.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let energy_ok = s.lyapunov <= v0 * (1.0 + 1e-9) && v0 < energy_cap;
            if !energy_ok || max_off > offset_cap {
                report.precondition_failures += 1;
            }
            let violated = match (grad_psi(xi, xj, params), grad_psi(xi, xjd, params)) {
                (Ok(g), Ok(gd)) => {
                    let mut bad = false;
                    for c in 0..dim {
                        let lhs = (g[c] - gd[c]).abs();
                        let rhs = constants.gamma * offset[c].abs() + constants.eta * max_off;
                        if rhs > 0.0 {
                            report.max_ratio = report.max_ratio.max(lhs / rhs);
                        }
                        bad |= lhs > rhs * (1.0 + 1e-12) + 1e-15;
                    }
                    bad
                }
                _ => true,
            };
            if violated {
                report.violations += 1;
                report.first_violation_time.get_or_insert(s.t);
            }
        }
    }
    report.passed = report.violations == 0;
    report
}
