//! Bounded time-varying delays and the sample histories they read from.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A realized delay `d(t) ∈ [0, d̄]` for one directed channel.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayProfile {
    Constant {
        dbar: f64,
        value: f64,
    },
    /// `d̄ (1 + sin(2π f t + φ)) / 2`.
    Sinusoidal {
        dbar: f64,
        frequency: f64,
        phase: f64,
    },
    /// Seeded random walk on a fixed knot grid, clipped to `[0, d̄]` and
    /// linearly interpolated between knots.
    RandomWalk {
        dbar: f64,
        spacing: f64,
        knots: Vec<f64>,
    },
}

fn check_dbar(dbar: f64) -> Result<()> {
    if dbar >= 0.0 && dbar.is_finite() {
        Ok(())
    } else {
        Err(Error::param("dbar", format!("must be finite and non-negative, got {dbar}")))
    }
}

impl DelayProfile {
    pub fn constant(dbar: f64, value: f64) -> Result<Self> {
        check_dbar(dbar)?;
        if !(0.0..=dbar).contains(&value) {
            return Err(Error::param("value", format!("constant delay {value} outside [0, {dbar}]")));
        }
        Ok(Self::Constant { dbar, value })
    }

    pub fn sinusoidal(dbar: f64, frequency: f64, phase: f64) -> Result<Self> {
        check_dbar(dbar)?;
        if !(frequency >= 0.0 && frequency.is_finite()) || !phase.is_finite() {
            return Err(Error::param("frequency", "frequency and phase must be finite, frequency >= 0"));
        }
        Ok(Self::Sinusoidal {
            dbar,
            frequency,
            phase,
        })
    }

    /// Knots cover `[0, horizon]`; past the last knot the delay holds.
    pub fn random_walk(dbar: f64, step_std: f64, spacing: f64, horizon: f64, seed: u64, stream: u64) -> Result<Self> {
        check_dbar(dbar)?;
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::param("knot_spacing", format!("must be positive, got {spacing}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be non-negative, got {horizon}")));
        }
        let normal = Normal::new(0.0, step_std)
            .map_err(|e| Error::param("step_std", format!("{e} (got {step_std})")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let count = (horizon / spacing).ceil() as usize + 2;
        let mut knots = Vec::with_capacity(count);
        let mut d = 0.5 * dbar;
        for _ in 0..count {
            knots.push(d);
            d = (d + normal.sample(&mut rng)).clamp(0.0, dbar);
        }
        Ok(Self::RandomWalk { dbar, spacing, knots })
    }

    pub fn dbar(&self) -> f64 {
        match *self {
            Self::Constant { dbar, .. } | Self::Sinusoidal { dbar, .. } | Self::RandomWalk { dbar, .. } => dbar,
        }
    }

    pub fn delay(&self, t: f64) -> f64 {
        let raw = match self {
            Self::Constant { value, .. } => *value,
            Self::Sinusoidal {
                dbar,
                frequency,
                phase,
            } => 0.5 * dbar * (1.0 + (2.0 * std::f64::consts::PI * frequency * t + phase).sin()),
            Self::RandomWalk { spacing, knots, .. } => {
                let s = (t / spacing).max(0.0);
                let k = s.floor() as usize;
                if k + 1 >= knots.len() {
                    knots[knots.len() - 1]
                } else {
                    let w = s - k as f64;
                    knots[k] + w * (knots[k + 1] - knots[k])
                }
            }
        };
        raw.clamp(0.0, self.dbar())
    }
}

/// Time-stamped samples of one agent's position.
///
/// Values before the first sample equal the first sample (constant
/// pre-history). Samples older than the retention window are dropped, always
/// keeping one sample at or before the window start so that lookbacks up to
/// `retention` stay covered.
#[derive(Debug, Clone)]
pub struct History {
    dim: usize,
    retention: f64,
    times: VecDeque<f64>,
    values: VecDeque<f64>,
    pruned: bool,
}

impl History {
    pub fn new(dim: usize, retention: f64) -> Self {
        Self {
            dim,
            retention,
            times: VecDeque::new(),
            values: VecDeque::new(),
            pruned: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.front().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.back().copied()
    }

    pub fn record(&mut self, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!("sample has dimension {}, history {}", x.len(), self.dim)));
        }
        if let Some(last) = self.last_time() {
            if !(t > last) {
                return Err(Error::NonMonotoneTimestamp { t, last });
            }
        }
        self.times.push_back(t);
        self.values.extend(x.iter().copied());
        let cutoff = t - self.retention;
        while self.times.len() >= 2 && self.times[1] <= cutoff {
            self.times.pop_front();
            self.values.drain(..self.dim);
            self.pruned = true;
        }
        Ok(())
    }

    fn sample(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.range(k * self.dim..(k + 1) * self.dim).copied()
    }

    /// Linear interpolation of the stored samples at time `t`.
    pub fn query(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (Some(first), Some(last)) = (self.first_time(), self.last_time()) else {
            return Err(Error::UncoveredLookback {
                t,
                start: f64::NAN,
                end: f64::NAN,
            });
        };
        if t > last || (self.pruned && t < first) || t.is_nan() {
            return Err(Error::UncoveredLookback { t, start: first, end: last });
        }
        if t <= first {
            for (o, v) in out.iter_mut().zip(self.sample(0)) {
                *o = v;
            }
            return Ok(());
        }
        // first index with time > t; t is in (times[k-1], times[k]]
        let k = self.times.partition_point(|&s| s < t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if t == t1 {
            for (o, v) in out.iter_mut().zip(self.sample(k)) {
                *o = v;
            }
            return Ok(());
        }
        let w = (t - t0) / (t1 - t0);
        for ((o, a), b) in out.iter_mut().zip(self.sample(k - 1)).zip(self.sample(k)) {
            *o = a + w * (b - a);
        }
        Ok(())
    }

    /// Position seen at `t` through `profile`: the sample at `t − d(t)`.
    pub fn query_delayed(&self, t: f64, profile: &DelayProfile, out: &mut [f64]) -> Result<()> {
        self.query(t - profile.delay(t), out)
    }
}

/// Delay-profile family selected in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileKind {
    /// Constant delay at `fraction` of each channel's `d̄`.
    Constant { fraction: f64 },
    /// Phases are spread evenly over the channels: `φ_k = 2πk / channel count`.
    Sinusoidal { frequency: f64 },
    RandomWalk { step_std: f64, knot_spacing: f64 },
}

impl Default for ProfileKind {
    fn default() -> Self {
        ProfileKind::Sinusoidal { frequency: 1.0 }
    }
}

impl ProfileKind {
    /// Profile for channel `index` out of `count`.
    pub fn realize(&self, dbar: f64, index: usize, count: usize, horizon: f64, seed: u64) -> Result<DelayProfile> {
        match *self {
            ProfileKind::Constant { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::param("fraction", format!("must be in [0, 1], got {fraction}")));
                }
                DelayProfile::constant(dbar, fraction * dbar)
            }
            ProfileKind::Sinusoidal { frequency } => {
                let phase = 2.0 * std::f64::consts::PI * index as f64 / count.max(1) as f64;
                DelayProfile::sinusoidal(dbar, frequency, phase)
            }
            ProfileKind::RandomWalk { step_std, knot_spacing } => {
                DelayProfile::random_walk(dbar, step_std, knot_spacing, horizon, seed, index as u64)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_history_is_first_sample() {
        let mut h = History::new(2, 0.2);
        h.record(0.0, &[1.0, -2.0]).unwrap();
        let mut out = [0.0; 2];
        for t in [-5.0, -0.1, 0.0] {
            h.query(t, &mut out).unwrap();
            assert_eq!(out, [1.0, -2.0]);
        }
    }

    #[test]
    fn rejects_non_monotone_records() {
        let mut h = History::new(1, 1.0);
        h.record(0.0, &[0.0]).unwrap();
        h.record(0.1, &[0.0]).unwrap();
        assert!(matches!(h.record(0.1, &[1.0]), Err(Error::NonMonotoneTimestamp { .. })));
        assert!(h.record(0.05, &[1.0]).is_err());
        assert!(h.record(0.2, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn two_samples_stay_covered() {
        let mut h = History::new(1, 0.2);
        h.record(0.0, &[0.0]).unwrap();
        h.record(1.0, &[2.0]).unwrap();
        // the older sample is the anchor for the window start
        assert_eq!(h.len(), 2);
        let mut out = [0.0];
        h.query(0.9, &mut out).unwrap();
        assert!((out[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn retention_bounds_memory() {
        let mut h = History::new(1, 0.2);
        let step = 1e-3;
        for k in 0..100_000 {
            h.record(k as f64 * step, &[k as f64]).unwrap();
        }
        assert!((200..=202).contains(&h.len()), "retained {}", h.len());
        let mut out = [0.0];
        let last = h.last_time().unwrap();
        h.query(last - 0.2, &mut out).unwrap();
        assert!(h.query(last - 0.25, &mut out).is_err());
        assert!(h.query(last + 1e-9, &mut out).is_err());
    }

    #[test]
    fn linear_signal_is_exact() {
        let mut h = History::new(1, 1.0);
        for k in 0..=1000 {
            let t = k as f64 * 1e-3;
            h.record(t, &[t]).unwrap();
        }
        let profile = DelayProfile::constant(0.3, 0.3).unwrap();
        let mut out = [0.0];
        h.query_delayed(1.0, &profile, &mut out).unwrap();
        assert!((out[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_delay_returns_current_sample() {
        let mut h = History::new(2, 0.5);
        h.record(0.0, &[0.1, 0.2]).unwrap();
        h.record(0.37, &[0.3, 0.4]).unwrap();
        let zero = DelayProfile::constant(0.1, 0.0).unwrap();
        let mut out = [0.0; 2];
        h.query_delayed(0.37, &zero, &mut out).unwrap();
        assert_eq!(out, [0.3, 0.4]);
    }

    #[test]
    fn sinusoid_stays_in_bounds() {
        let p = DelayProfile::sinusoidal(0.1, 1.0, 0.7).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..10_000 {
            let d = p.delay(k as f64 * 1.234e-3);
            assert!((0.0..=0.1).contains(&d));
            lo = lo.min(d);
            hi = hi.max(d);
        }
        // the profile sweeps essentially the whole interval
        assert!(lo < 1e-4 && hi > 0.1 - 1e-4);
    }

    #[test]
    fn random_walk_is_seeded_and_bounded() {
        let a = DelayProfile::random_walk(0.1, 0.02, 0.05, 10.0, 7, 3).unwrap();
        let b = DelayProfile::random_walk(0.1, 0.02, 0.05, 10.0, 7, 3).unwrap();
        let c = DelayProfile::random_walk(0.1, 0.02, 0.05, 10.0, 7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for k in 0..20_000 {
            let t = k as f64 * 7e-4;
            let d = a.delay(t);
            assert!((0.0..=0.1).contains(&d));
            assert_eq!(d.to_bits(), b.delay(t).to_bits());
        }
    }

    #[test]
    fn constant_outside_bound_rejected() {
        assert!(DelayProfile::constant(0.1, 0.2).is_err());
        assert!(DelayProfile::constant(-0.1, 0.0).is_err());
    }
}
