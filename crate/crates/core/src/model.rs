//! Model specification, the deterministic limit path `x^S` and the limit
//! standard deviation `Sigma_{S,sigma} = sqrt(int_0^T sigma(x_t^S)^2 dt)`.

use serde::{Deserialize, Serialize};

use crate::expr::{estimate_lipschitz, Expression};
use crate::{Error, Result};

/// Default number of RK4 steps over the horizon.
pub const DEFAULT_ODE_STEPS: usize = 10_000;
/// Below this the limit variance is treated as zero.
pub const DEGENERATE_SIGMA: f64 = 1e-12;
/// Grid size used for Lipschitz estimates during validation.
pub const LIPSCHITZ_SAMPLES: usize = 10_001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct ModelSpec {
    drift: Expression,
    diffusion: Expression,
    x0: f64,
    horizon: f64,
    eps: f64,
}

#[derive(Deserialize)]
struct RawModel {
    drift: Expression,
    diffusion: Expression,
    x0: f64,
    horizon: f64,
    eps: f64,
}

impl TryFrom<RawModel> for ModelSpec {
    type Error = Error;

    fn try_from(r: RawModel) -> Result<Self> {
        ModelSpec::new(r.drift, r.diffusion, r.x0, r.horizon, r.eps)
    }
}

impl ModelSpec {
    pub fn new(
        drift: Expression,
        diffusion: Expression,
        x0: f64,
        horizon: f64,
        eps: f64,
    ) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::invalid(format!("x0 must be finite, got {x0}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("T must be positive, got {horizon}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
        }
        drift.eval(x0)?;
        diffusion.eval(x0)?;
        Ok(Self {
            drift,
            diffusion,
            x0,
            horizon,
            eps,
        })
    }

    /// Convenience constructor from expression sources.
    pub fn parse(drift: &str, diffusion: &str, x0: f64, horizon: f64, eps: f64) -> Result<Self> {
        Self::new(
            Expression::parse(drift)?,
            Expression::parse(diffusion)?,
            x0,
            horizon,
            eps,
        )
    }

    pub fn drift(&self) -> &Expression {
        &self.drift
    }

    pub fn diffusion(&self) -> &Expression {
        &self.diffusion
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_drift(&self, drift: Expression) -> Result<Self> {
        Self::new(
            drift,
            self.diffusion.clone(),
            self.x0,
            self.horizon,
            self.eps,
        )
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(
            self.drift.clone(),
            self.diffusion.clone(),
            self.x0,
            self.horizon,
            eps,
        )
    }

    /// `Sigma_{S,sigma}` with the default ODE step.
    pub fn sigma_limit(&self) -> Result<f64> {
        let path = solve_ode(self, self.horizon / DEFAULT_ODE_STEPS as f64)?;
        Ok(limit_variance(self, &path)?.sigma_limit)
    }
}

/// Solution of `dx/dt = S(x)`, `x(0) = x0` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitVariance {
    pub sigma_limit: f64,
    pub quadrature_step: f64,
}

/// One classic RK4 step of `dx/dt = f(x)`.
pub(crate) fn rk4_step(f: &Expression, x: f64, dt: f64) -> Result<f64> {
    let k1 = f.eval(x)?;
    let k2 = f.eval(x + 0.5 * dt * k1)?;
    let k3 = f.eval(x + 0.5 * dt * k2)?;
    let k4 = f.eval(x + dt * k3)?;
    Ok(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// RK4 along an arbitrary increasing time grid starting at 0.
pub(crate) fn integrate_on(model: &ModelSpec, times: &[f64]) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(times.len());
    let mut x = model.x0;
    values.push(x);
    for w in times.windows(2) {
        // Evaluation failures of S part-way through a blow-up surface as
        // non-finite intermediate stages; report them as blow-up too.
        x = match rk4_step(&model.drift, x, w[1] - w[0]) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => return Err(Error::BlowUp { time: w[1] }),
            Err(Error::Eval(crate::expr::EvalError::NonFinite { .. })) => {
                return Err(Error::BlowUp { time: w[1] })
            }
            Err(e) => return Err(e),
        };
        values.push(x);
    }
    Ok(values)
}

/// RK4 integration on a uniform grid with an even number of intervals, each
/// no wider than `step`. The final time is exactly `T`.
pub fn solve_ode(model: &ModelSpec, step: f64) -> Result<DeterministicPath> {
    let t_end = model.horizon;
    if !(step > 0.0 && step <= t_end) {
        return Err(Error::invalid(format!(
            "ODE step must lie in (0, T], got {step}"
        )));
    }
    let mut n = (t_end / step - 1e-9).ceil().max(1.0) as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let width = t_end / n as f64;
    let times: Vec<f64> = (0..=n)
        .map(|k| if k == n { t_end } else { k as f64 * width })
        .collect();
    let values = integrate_on(model, &times)?;
    Ok(DeterministicPath {
        times,
        values,
        step: width,
    })
}

/// Composite Simpson rule on a uniform grid with an even number of intervals.
pub(crate) fn simpson(values: &[f64], width: f64) -> f64 {
    let n = values.len() - 1;
    assert!(
        n >= 2 && n.is_multiple_of(2),
        "Simpson needs an even interval count"
    );
    let mut odd = 0.0;
    let mut even = 0.0;
    for (k, v) in values.iter().enumerate().take(n).skip(1) {
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    width / 3.0 * (values[0] + 4.0 * odd + 2.0 * even + values[n])
}

/// Running integral at every grid point: Simpson up to the last even index,
/// plus a three-point rule for a trailing odd interval.
pub(crate) fn cumulative_simpson(values: &[f64], width: f64) -> Vec<f64> {
    let n = values.len() - 1;
    assert!(
        n >= 2 && n.is_multiple_of(2),
        "Simpson needs an even interval count"
    );
    let mut out = vec![0.0; n + 1];
    let mut k = 0;
    while k < n {
        let (f0, f1, f2) = (values[k], values[k + 1], values[k + 2]);
        out[k + 1] = out[k] + width * (5.0 * f0 + 8.0 * f1 - f2) / 12.0;
        out[k + 2] = out[k] + width / 3.0 * (f0 + 4.0 * f1 + f2);
        k += 2;
    }
    out
}

pub fn limit_variance(model: &ModelSpec, path: &DeterministicPath) -> Result<LimitVariance> {
    let squared = path
        .values
        .iter()
        .map(|&x| model.diffusion.eval(x).map(|s| s * s))
        .collect::<Result<Vec<_>, _>>()?;
    let integral = simpson(&squared, path.step);
    // Simpson weights are positive, so a nonnegative integrand cannot go below zero.
    assert!(
        integral >= 0.0,
        "negative quadrature of a square: {integral}"
    );
    Ok(LimitVariance {
        sigma_limit: integral.sqrt(),
        quadrature_step: path.step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lipschitz_drift: Option<f64>,
    pub lipschitz_sigma: Option<f64>,
    pub sigma_limit: f64,
    pub sigma_positive: bool,
    pub eps_ok: bool,
    /// The sampling condition depends on the observation grid; it is checked
    /// when a grid is built and is `None` here.
    pub h_condition: Option<bool>,
    pub working_interval: (f64, f64),
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// Largest of the estimated Lipschitz constants of `S` and `sigma`.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match (self.lipschitz_drift, self.lipschitz_sigma) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        }
    }
}

/// Default working interval: the hull of `[x0 - 5, x0 + 5]` and the range of
/// the limit path, widened by 10% of its width on each side.
pub fn default_working_interval(model: &ModelSpec, path: &DeterministicPath) -> (f64, f64) {
    let (mut lo, mut hi) = (model.x0 - 5.0, model.x0 + 5.0);
    for &v in &path.values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = 0.1 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Numerical check of the standing assumptions: Lipschitz estimates for `S`
/// and `sigma`, and positivity of the limit variance. Only a vanishing limit
/// variance is an error; everything else becomes a warning.
pub fn validate(
    model: &ModelSpec,
    working_interval: Option<(f64, f64)>,
) -> Result<ValidationReport> {
    let path = solve_ode(model, model.horizon / DEFAULT_ODE_STEPS as f64)?;
    let sigma_limit = limit_variance(model, &path)?.sigma_limit;
    let (lo, hi) = working_interval.unwrap_or_else(|| default_working_interval(model, &path));
    if !(lo < hi) || !(lo..=hi).contains(&model.x0) {
        return Err(Error::invalid(format!(
            "working interval [{lo}, {hi}] must be non-empty and contain x0 = {}",
            model.x0
        )));
    }
    let mut warnings = Vec::new();
    let lipschitz_drift = lipschitz_with_warnings("drift", &model.drift, lo, hi, &mut warnings);
    let lipschitz_sigma = lipschitz_with_warnings("sigma", &model.diffusion, lo, hi, &mut warnings);
    if let Some((plo, phi)) = path_range(&path) {
        if plo < lo || phi > hi {
            warnings.push(format!(
                "limit path range [{plo}, {phi}] leaves the working interval"
            ));
        }
    }
    if sigma_limit < DEGENERATE_SIGMA {
        return Err(Error::DegenerateModel(format!(
            "limit standard deviation {sigma_limit:e} vanishes; sigma is zero along the limit path"
        )));
    }
    Ok(ValidationReport {
        lipschitz_drift,
        lipschitz_sigma,
        sigma_limit,
        sigma_positive: true,
        eps_ok: model.eps <= 1.0,
        h_condition: None,
        working_interval: (lo, hi),
        warnings,
    })
}

fn path_range(path: &DeterministicPath) -> Option<(f64, f64)> {
    let lo = path.values.iter().copied().reduce(f64::min)?;
    let hi = path.values.iter().copied().reduce(f64::max)?;
    Some((lo, hi))
}

fn lipschitz_with_warnings(
    name: &str,
    e: &Expression,
    lo: f64,
    hi: f64,
    warnings: &mut Vec<String>,
) -> Option<f64> {
    let local = match estimate_lipschitz(e, lo, hi, LIPSCHITZ_SAMPLES) {
        Ok(v) => v,
        Err(err) => {
            warnings.push(format!("{name}: cannot evaluate on [{lo}, {hi}]: {err}"));
            return None;
        }
    };
    // A slope estimate that keeps growing with the interval suggests the
    // function is only locally Lipschitz.
    let mid = 0.5 * (lo + hi);
    let half = hi - lo;
    match estimate_lipschitz(e, mid - half, mid + half, 2 * LIPSCHITZ_SAMPLES - 1) {
        Ok(wide) if wide > 1.5 * local + 1e-9 => warnings.push(format!(
            "{name}: locally-Lipschitz only; slope estimate grows from {local:.4} to {wide:.4} when the interval is doubled"
        )),
        Ok(_) => {}
        Err(err) => warnings.push(format!(
            "{name}: global Lipschitz check skipped, cannot evaluate on the doubled interval: {err}"
        )),
    }
    Some(local)
}
