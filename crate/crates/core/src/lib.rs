//! Goodness-of-fit testing for the drift of a one-dimensional small-noise
//! diffusion
//!
//! ```text
//! dX_t = S(X_t) dt + eps * sigma(X_t) dW_t,   X_0 = x0,   t in [0, T]
//! ```
//!
//! observed at discrete times `0 = t_0 < ... < t_n = T`. The test statistic is
//! the supremum of the cumulative residual field `U(u)` normalised by the
//! realised-volatility estimate of `sqrt(int_0^T sigma(x_t)^2 dt)`; under the
//! null drift its limit law is that of `sup_{[0,1]} |B_t|` for a standard
//! Brownian motion, whatever `S0` and `sigma` are.
//!
//! Modules:
//! - [`expr`]: parser and evaluator for the user-supplied functions.
//! - [`model`]: model specification, deterministic limit path, limit variance.
//! - [`simulate`]: observation grids and Euler-Maruyama sample paths.
//! - [`statistic`]: the test field, the variance estimator and diagnostics.
//! - [`limitdist`]: distribution of the supremum of `|B|` on `[0, 1]`.
//! - [`harness`]: Monte Carlo level, power and convergence experiments.
//! - [`io`]: CSV and JSON formats.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod harness;
pub mod io;
pub mod limitdist;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod statistic;

mod error;

pub use error::{Error, Result};
pub use expr::Expression;
pub use limitdist::SupAbsBm;
pub use model::ModelSpec;
pub use rng::NoiseKey;
pub use simulate::{ObservedPath, SamplingGrid};
