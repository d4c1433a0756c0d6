//! Observation grids and discretely observed sample paths.

use serde::{Deserialize, Serialize};

use crate::model::{integrate_on, ModelSpec};
use crate::rng::{NoiseKey, NormalStream, GRID_STREAM};
use crate::{Error, Result};

/// Paths are abandoned once `|X|` exceeds this.
pub const BLOW_UP_LIMIT: f64 = 1e10;
pub const DEFAULT_SUBSTEPS: usize = 4;
/// Minimum number of paths for [`increment_moments`].
pub const MIN_MOMENT_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum GridLayout {
    Uniform,
    /// Interior times moved uniformly within +-25% of their cell, drawn from
    /// the reserved grid stream of `seed` (independent of the path noise).
    Jittered {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    times: Vec<f64>,
    mesh: f64,
    scheme_ok: bool,
    warnings: Vec<String>,
}

impl SamplingGrid {
    /// Grid with target mesh `eps^gamma`. The sampling condition
    /// `h = o(eps^2)` holds along the family exactly when `gamma > 2`.
    pub fn new(horizon: f64, eps: f64, gamma: f64, layout: GridLayout) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("T must be positive, got {horizon}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let target = eps.powf(gamma).min(horizon);
        let n = (horizon / target - 1e-9).ceil().max(1.0) as usize;
        let cell = horizon / n as f64;
        let mut times: Vec<f64> = (0..=n)
            .map(|i| if i == n { horizon } else { i as f64 * cell })
            .collect();
        if let GridLayout::Jittered { seed } = layout {
            let mut stream = NormalStream::new(NoiseKey::new(seed, GRID_STREAM));
            for t in times.iter_mut().take(n).skip(1) {
                *t += (stream.next_uniform() - 0.5) * 0.5 * cell;
            }
        }
        let mut grid = Self::from_times_unchecked(times);
        grid.scheme_ok = gamma > 2.0;
        if !grid.scheme_ok {
            grid.warnings.push(format!(
                "gamma = {gamma} <= 2: mesh eps^gamma is not o(eps^2); the limit law need not hold"
            ));
        }
        Ok(grid)
    }

    /// Grid from given observation times; the sampling condition is judged
    /// by the heuristic `h <= eps^2`.
    pub fn from_times(times: Vec<f64>, eps: f64) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a grid needs at least two times"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid(format!(
                "first time must be 0, got {}",
                times[0]
            )));
        }
        if let Some(i) = times
            .windows(2)
            .position(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::invalid(format!(
                "times must be finite and strictly increasing (index {})",
                i + 1
            )));
        }
        let mut grid = Self::from_times_unchecked(times);
        grid.scheme_ok = grid.mesh <= eps * eps;
        if !grid.scheme_ok {
            grid.warnings.push(format!(
                "mesh {} exceeds eps^2 = {}; sampling may be too coarse for the limit law",
                grid.mesh,
                eps * eps
            ));
        }
        Ok(grid)
    }

    fn from_times_unchecked(times: Vec<f64>) -> Self {
        let mesh = max_gap(&times);
        Self {
            times,
            mesh,
            scheme_ok: true,
            warnings: Vec::new(),
        }
    }

    /// Splits every interval into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let mut times = Vec::with_capacity((self.times.len() - 1) * factor + 1);
        times.push(self.times[0]);
        for w in self.times.windows(2) {
            let d = (w[1] - w[0]) / factor as f64;
            times.extend((1..factor).map(|j| w[0] + j as f64 * d));
            times.push(w[1]);
        }
        Self {
            mesh: max_gap(&times),
            times,
            scheme_ok: self.scheme_ok,
            warnings: self.warnings.clone(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn scheme_ok(&self) -> bool {
        self.scheme_ok
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("grid is non-empty")
    }

    /// Number of observation intervals.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }
}

fn max_gap(times: &[f64]) -> f64 {
    times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// The Euler path on the refined simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Brownian increments driving each fine step.
    pub dw: Vec<f64>,
    /// Fine steps per observation interval; observation `i` is fine index `i * substeps`.
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedPath {
    pub grid: SamplingGrid,
    pub values: Vec<f64>,
    pub eps: f64,
    /// Noise key when the path was simulated.
    pub key: Option<NoiseKey>,
    pub fine: Option<FinePath>,
}

impl ObservedPath {
    /// Path from externally observed data.
    pub fn from_observations(times: Vec<f64>, values: Vec<f64>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        if times.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("value at index {i} is not finite")));
        }
        let grid = SamplingGrid::from_times(times, eps)?;
        Ok(Self {
            grid,
            values,
            eps,
            key: None,
            fine: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Euler-Maruyama simulation with `substeps` fine steps per observation
/// interval. Output is a pure function of the arguments.
pub fn simulate_path(
    model: &ModelSpec,
    grid: &SamplingGrid,
    substeps: usize,
    key: NoiseKey,
    keep_fine: bool,
) -> Result<ObservedPath> {
    if substeps == 0 {
        return Err(Error::invalid("substeps must be at least 1"));
    }
    if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(Error::invalid(format!(
            "grid ends at {} but the model horizon is {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    let drift = model.drift();
    let diffusion = model.diffusion();
    let eps = model.eps();
    let times = grid.times();
    let mut stream = NormalStream::new(key);

    let mut x = model.x0();
    let mut values = Vec::with_capacity(times.len());
    values.push(x);
    let mut fine = keep_fine.then(|| {
        let cap = grid.intervals() * substeps + 1;
        let mut f = FinePath {
            times: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            dw: Vec::with_capacity(cap - 1),
            substeps,
        };
        f.times.push(0.0);
        f.values.push(x);
        f
    });

    for w in times.windows(2) {
        let dt = (w[1] - w[0]) / substeps as f64;
        let sqrt_dt = dt.sqrt();
        for j in 1..=substeps {
            let t = if j == substeps {
                w[1]
            } else {
                w[0] + j as f64 * dt
            };
            let dw = sqrt_dt * stream.next_normal();
            x += drift.eval(x)? * dt + eps * diffusion.eval(x)? * dw;
            if !(x.abs() <= BLOW_UP_LIMIT) {
                return Err(Error::BlowUp { time: t });
            }
            if let Some(f) = fine.as_mut() {
                f.times.push(t);
                f.values.push(x);
                f.dw.push(dw);
            }
        }
        values.push(x);
    }

    Ok(ObservedPath {
        grid: grid.clone(),
        values,
        eps,
        key: Some(key),
        fine,
    })
}

/// Fitted constants of the increment-moment bound
/// `E|X_t' - X_t|^k <= C_k max(|t'-t|^k, eps^k |t'-t|^{k/2})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub eps: f64,
    pub mesh: f64,
    pub n_intervals: usize,
    pub n_paths: usize,
    pub c2: f64,
    pub c4: f64,
}

/// Largest ratio, over intervals, of the cross-path mean `|dX_i|^k` to
/// `max(dt_i^k, eps^k dt_i^{k/2})`, for `k = 2, 4`.
pub fn increment_moments(paths: &[ObservedPath]) -> Result<MomentReport> {
    if paths.len() < MIN_MOMENT_PATHS {
        return Err(Error::InsufficientSample {
            have: paths.len(),
            need: MIN_MOMENT_PATHS,
        });
    }
    let first = &paths[0];
    if paths
        .iter()
        .any(|p| p.eps != first.eps || p.times() != first.times())
    {
        return Err(Error::invalid("paths must share their grid and eps"));
    }
    let eps = first.eps;
    let times = first.times();
    let m = paths.len() as f64;
    let (mut c2, mut c4) = (0.0f64, 0.0f64);
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        let (mut s2, mut s4) = (0.0, 0.0);
        for p in paths {
            let d = p.values[i] - p.values[i - 1];
            let d2 = d * d;
            s2 += d2;
            s4 += d2 * d2;
        }
        let bound2 = (dt * dt).max(eps * eps * dt);
        let bound4 = dt.powi(4).max(eps.powi(4) * dt * dt);
        c2 = c2.max(s2 / m / bound2);
        c4 = c4.max(s4 / m / bound4);
    }
    Ok(MomentReport {
        eps,
        mesh: first.grid.mesh(),
        n_intervals: times.len() - 1,
        n_paths: paths.len(),
        c2,
        c4,
    })
}

/// Both sides of the pathwise Gronwall bound
/// `sup|X_t - x_t| <= exp(K T) eps sup|int_0^t sigma(X_s) dW_s|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GronwallCheck {
    pub deviation: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates the Gronwall bound on the fine grid of a simulated path, with
/// the limit path integrated by RK4 on the same grid, the stochastic
/// integral as the left-point Ito sum, and `bound` inflated by `1 + slack`.
pub fn gronwall_check(
    model: &ModelSpec,
    path: &ObservedPath,
    lipschitz: f64,
    slack: f64,
) -> Result<GronwallCheck> {
    let fine = path.fine.as_ref().ok_or(Error::MissingFineData)?;
    let limit = integrate_on(model, &fine.times)?;
    let deviation = fine
        .values
        .iter()
        .zip(&limit)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut integral = 0.0f64;
    let mut sup_integral = 0.0f64;
    for (x, dw) in fine.values.iter().zip(&fine.dw) {
        integral += model.diffusion().eval(*x)? * dw;
        sup_integral = sup_integral.max(integral.abs());
    }
    let bound = (lipschitz * model.horizon()).exp() * path.eps * sup_integral * (1.0 + slack);
    Ok(GronwallCheck {
        deviation,
        bound,
        holds: deviation <= bound,
    })
}
