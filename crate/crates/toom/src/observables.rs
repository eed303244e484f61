//! Trajectory observables: additive functionals, per-sign edge currents and
//! the flux moment generating function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SpinConfig;
use crate::dynamics::{JumpRecord, Observer};

/// Time integral of a local function of the configuration. The integrand is
/// piecewise constant between events, so the accumulation is exact — there is
/// no quadrature error to control.
pub struct AdditiveAccumulator<F: Fn(&SpinConfig) -> f64> {
    value: f64,
    integrand: F,
}

impl<F: Fn(&SpinConfig) -> f64> AdditiveAccumulator<F> {
    pub fn new(integrand: F) -> Self {
        Self { value: 0.0, integrand }
    }

    #[inline]
    pub fn accumulate(&mut self, config: &SpinConfig, dt: f64) {
        debug_assert!(dt >= 0.0);
        self.value += (self.integrand)(config) * dt;
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

impl<F: Fn(&SpinConfig) -> f64> Observer for AdditiveAccumulator<F> {
    fn on_event(&mut self, pre: &SpinConfig, _jump: &JumpRecord, dt: f64) {
        self.accumulate(pre, dt);
    }

    fn on_close(&mut self, config: &SpinConfig, dt: f64) {
        self.accumulate(config, dt);
    }
}

/// Integrated per-sign particle currents across one bond.
///
/// Bond `x` sits between sites `x-1` and `x` (bond 0 is the wrap bond). An
/// executed jump from `origin` to `target` spans the cyclic interval
/// `(origin, target]` and crosses every interior bond exactly once; the
/// moving `sign`-particle crosses rightward, its partner leftward, counted
/// once under the sign of the clock.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CurrentAccumulator {
    edge: usize,
    pub count_plus: u64,
    pub count_minus: u64,
}

impl CurrentAccumulator {
    pub fn new(edge: usize) -> Self {
        Self { edge, count_plus: 0, count_minus: 0 }
    }

    pub fn edge(&self) -> usize {
        self.edge
    }

    #[inline]
    pub fn record(&mut self, jump: &JumpRecord, ring_size: usize) {
        if !jump.executed {
            return;
        }
        let d_edge = (self.edge + ring_size - jump.origin) % ring_size;
        let d_target = (jump.target + ring_size - jump.origin) % ring_size;
        if d_edge >= 1 && d_edge <= d_target {
            if jump.sign == 1 {
                self.count_plus += 1;
            } else {
                self.count_minus += 1;
            }
        }
    }

    /// Total crossings `J_x`, both signs.
    pub fn total(&self) -> u64 {
        self.count_plus + self.count_minus
    }

    /// Net `+` transport rightward through the bond: `+`-jumps carry the plus
    /// particle rightward, `-`-jumps carry it leftward.
    pub fn signed(&self) -> i64 {
        self.count_plus as i64 - self.count_minus as i64
    }
}

/// One empirical MGF value with a bootstrap confidence band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfPoint {
    pub gamma: f64,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Empirical `E[exp(gamma * J / t)]` over independent flux samples, one point
/// per `gamma`, with percentile bootstrap bands. Computed in log space so
/// large samples cannot overflow.
pub fn flux_mgf_probe<R: Rng + ?Sized>(
    samples: &[f64],
    t: f64,
    gammas: &[f64],
    bootstrap: usize,
    rng: &mut R,
) -> Vec<MgfPoint> {
    assert!(!samples.is_empty() && t > 0.0);
    let scaled: Vec<f64> = samples.iter().map(|j| j / t).collect();
    let log_mean_exp = |gamma: f64, xs: &[f64]| -> f64 {
        let m = xs
            .iter()
            .map(|x| gamma * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = xs.iter().map(|x| (gamma * x - m).exp()).sum();
        m + (sum / xs.len() as f64).ln()
    };
    gammas
        .iter()
        .map(|&gamma| {
            let value = log_mean_exp(gamma, &scaled).exp();
            let mut boots: Vec<f64> = (0..bootstrap)
                .map(|_| {
                    let resample: Vec<f64> = (0..scaled.len())
                        .map(|_| scaled[rng.random_range(0..scaled.len())])
                        .collect();
                    log_mean_exp(gamma, &resample).exp()
                })
                .collect();
            boots.sort_by(f64::total_cmp);
            let (lo, hi) = if boots.is_empty() {
                (value, value)
            } else {
                (
                    boots[(0.025 * (boots.len() - 1) as f64).round() as usize],
                    boots[(0.975 * (boots.len() - 1) as f64).round() as usize],
                )
            };
            MgfPoint { gamma, value, lo, hi }
        })
        .collect()
}
