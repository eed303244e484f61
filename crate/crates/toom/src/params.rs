//! Model parameters and their validation.

use serde::{Deserialize, Serialize};

/// Ring size, plus-density and clock rates.
///
/// Construction normalizes the clock rates to `lambda_plus + lambda_minus = 1`
/// (this only sets the overall time scale) and rejects degenerate inputs, so a
/// value of this type is always usable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", rename_all = "camelCase")]
pub struct Params {
    ring_size: usize,
    p: f64,
    lambda_plus: f64,
    lambda_minus: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("ring size must be at least 2, got {0}")]
    RingTooSmall(usize),
    #[error("p must lie strictly inside (0, 1), got {0}")]
    DensityOutOfRange(f64),
    #[error("clock rates must be finite and nonnegative, got ({0}, {1})")]
    BadRates(f64, f64),
    #[error("clock rates must not both be zero")]
    ZeroRates,
}

impl Params {
    pub fn new(
        ring_size: usize,
        p: f64,
        lambda_plus: f64,
        lambda_minus: f64,
    ) -> Result<Self, ParamsError> {
        if ring_size < 2 {
            return Err(ParamsError::RingTooSmall(ring_size));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(ParamsError::DensityOutOfRange(p));
        }
        if !lambda_plus.is_finite() || !lambda_minus.is_finite() || lambda_plus < 0.0 || lambda_minus < 0.0
        {
            return Err(ParamsError::BadRates(lambda_plus, lambda_minus));
        }
        let total = lambda_plus + lambda_minus;
        if total == 0.0 {
            return Err(ParamsError::ZeroRates);
        }
        Ok(Self {
            ring_size,
            p,
            lambda_plus: lambda_plus / total,
            lambda_minus: lambda_minus / total,
        })
    }

    pub fn ring_size(&self) -> usize {
        self.ring_size
    }

    /// Probability that a site carries spin `+1` under the product measure.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    /// Clock rate of a particle of the given sign.
    pub fn rate_for(&self, sign: i8) -> f64 {
        if sign > 0 {
            self.lambda_plus
        } else {
            self.lambda_minus
        }
    }

    /// Density of the given sign: `p` for `+`, `1 - p` for `-`.
    pub fn density_for(&self, sign: i8) -> f64 {
        if sign > 0 {
            self.p
        } else {
            1.0 - self.p
        }
    }

    /// Same rates and density on a different ring.
    pub fn with_ring_size(&self, ring_size: usize) -> Result<Self, ParamsError> {
        Self::new(ring_size, self.p, self.lambda_plus, self.lambda_minus)
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawParams {
    ring_size: usize,
    p: f64,
    lambda_plus: f64,
    lambda_minus: f64,
}

impl TryFrom<RawParams> for Params {
    type Error = ParamsError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        Params::new(raw.ring_size, raw.p, raw.lambda_plus, raw.lambda_minus)
    }
}
