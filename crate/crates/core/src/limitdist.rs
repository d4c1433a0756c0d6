//! Law of `sup_{t in [0,1]} |B_t|` for a standard Brownian motion `B`.
//!
//! For moderate `x` the CDF is the alternating theta series
//!
//! ```text
//! P(sup|B| <= x) = (4/pi) sum_{k>=0} (-1)^k / (2k+1) exp(-(2k+1)^2 pi^2 / (8 x^2))
//! ```
//!
//! truncated after `series_terms` terms. Above [`SERIES_SWITCH`] the upper
//! tail is taken from the equivalent reflection series
//! `P(sup|B| > x) = 4 sum_{k>=0} (-1)^k Phi_bar((2k+1) x)`, which keeps the
//! computed CDF monotone in floating point where it approaches 1.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TERMS: usize = 50;
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// CDF is clamped to 0 below this point (true value < 1e-15).
pub const LOWER_CLAMP: f64 = 0.05;
/// Theta series below, reflection series above.
pub const SERIES_SWITCH: f64 = 1.5;
/// Bracket searched by [`SupAbsBm::quantile`].
pub const QUANTILE_BRACKET: (f64, f64) = (1e-6, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupAbsBm {
    series_terms: usize,
    tolerance: f64,
}

impl Default for SupAbsBm {
    fn default() -> Self {
        Self {
            series_terms: DEFAULT_TERMS,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

fn upper_normal_tail(y: f64) -> f64 {
    0.5 * erfc(y * FRAC_1_SQRT_2)
}

impl SupAbsBm {
    pub fn new(series_terms: usize, tolerance: f64) -> Result<Self> {
        if series_terms < 5 {
            return Err(Error::invalid(format!(
                "need at least 5 series terms, got {series_terms}"
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        Ok(Self {
            series_terms,
            tolerance,
        })
    }

    pub fn series_terms(&self) -> usize {
        self.series_terms
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Truncated theta series, valid for any `x > 0`.
    pub fn theta_series(&self, x: f64) -> f64 {
        let c = PI * PI / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 0..self.series_terms {
            let m = (2 * k + 1) as f64;
            let term = (-c * m * m).exp() / m;
            if k % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        4.0 / PI * sum
    }

    /// Size of the first omitted theta-series term at `x`.
    pub fn theta_truncation_bound(&self, x: f64) -> f64 {
        let m = (2 * self.series_terms + 1) as f64;
        4.0 / PI * (-(PI * PI) * m * m / (8.0 * x * x)).exp() / m
    }

    /// Truncated reflection series for `P(sup|B| > x)`.
    pub fn reflection_tail(&self, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..self.series_terms {
            let term = upper_normal_tail((2 * k + 1) as f64 * x);
            if term == 0.0 {
                break;
            }
            if k % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        4.0 * sum
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x < LOWER_CLAMP {
            return 0.0;
        }
        let v = if x <= SERIES_SWITCH {
            self.theta_series(x)
        } else {
            1.0 - self.reflection_tail(x)
        };
        v.clamp(0.0, 1.0)
    }

    /// Upper-tail probability `1 - F(d)`.
    pub fn p_value(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(Error::invalid(format!("statistic must be >= 0, got {d}")));
        }
        Ok(1.0 - self.cdf(d))
    }

    /// `x` with `F(x) = p`, by bisection on [`QUANTILE_BRACKET`] down to
    /// adjacent floating-point endpoints.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!(
                "probability must lie in (0, 1), got {p}"
            )));
        }
        Ok(self.bisect(|x| self.cdf(x) < p))
    }

    /// Largest `x` at which the test at level `alpha` does not reject, i.e.
    /// the boundary of `{x : 1 - F(x) < alpha}`.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let hi = self.bisect(|x| 1.0 - self.cdf(x) >= alpha);
        Ok(prev_float(hi))
    }

    /// Smallest float in the bracket where `below` turns false.
    fn bisect(&self, below: impl Fn(f64) -> bool) -> f64 {
        let (mut lo, mut hi) = QUANTILE_BRACKET;
        if !below(lo) {
            return lo;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

fn prev_float(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() - 1)
}
