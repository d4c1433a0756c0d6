//! The residual field `U`, the variance estimator, the normalised test, and
//! the diagnostic fields `V`, `M` and `U_Delta`.
//!
//! All fields are right-continuous and piecewise constant in `u` between
//! their evaluation points, so suprema over `u` are maxima over stored values.

use serde::{Deserialize, Serialize};

use crate::expr::Expression;
use crate::limitdist::SupAbsBm;
use crate::model::{cumulative_simpson, solve_ode, ModelSpec, DEFAULT_ODE_STEPS};
use crate::simulate::ObservedPath;
use crate::{Error, Result};

/// `sigma_hat` below this cannot normalise the statistic.
pub const DEGENERATE_SIGMA_HAT: f64 = 1e-12;
/// Separation below this is reported as "not separated".
pub const SEPARATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCurve {
    pub u_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub sup_abs: f64,
}

impl TestCurve {
    fn from_values(u_grid: Vec<f64>, values: Vec<f64>) -> Self {
        let sup_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            u_grid,
            values,
            sup_abs,
        }
    }

    /// Value of the piecewise-constant field at `u`.
    pub fn at(&self, u: f64) -> f64 {
        let idx = self.u_grid.partition_point(|&t| t <= u);
        self.values[idx.saturating_sub(1)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `sup_u |a(u) - b(u)|` for fields on the same evaluation points.
pub fn sup_abs_diff(a: &TestCurve, b: &TestCurve) -> f64 {
    assert_eq!(a.u_grid, b.u_grid, "curves must share evaluation points");
    a.values
        .iter()
        .zip(&b.values)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `sup_u |coarse(u) - fine(u)|` where the evaluation points of `coarse` are
/// a subset of those of `fine`.
pub fn sup_abs_diff_nested(coarse: &TestCurve, fine: &TestCurve) -> f64 {
    let mut j = 0;
    let mut sup = 0.0f64;
    for (u, f) in fine.u_grid.iter().zip(&fine.values) {
        while j + 1 < coarse.u_grid.len() && coarse.u_grid[j + 1] <= *u {
            j += 1;
        }
        sup = sup.max((coarse.values[j] - f).abs());
    }
    sup
}

fn check_path(path: &ObservedPath) -> Result<()> {
    if path.len() < 2 {
        return Err(Error::invalid("path needs at least two observations"));
    }
    if !(path.eps > 0.0) {
        return Err(Error::invalid(format!(
            "eps must be positive, got {}",
            path.eps
        )));
    }
    Ok(())
}

/// Cumulative sum of `eps^-1 * term(i)` over observation intervals, with a
/// leading zero at `u = 0`.
fn cumulative(
    path: &ObservedPath,
    mut term: impl FnMut(usize) -> Result<f64>,
) -> Result<TestCurve> {
    check_path(path)?;
    let inv_eps = 1.0 / path.eps;
    let mut values = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    values.push(0.0);
    for i in 1..path.len() {
        acc += term(i)?;
        values.push(acc * inv_eps);
    }
    Ok(TestCurve::from_values(path.times().to_vec(), values))
}

/// `U(t_j) = eps^-1 sum_{i<=j} [X_i - X_{i-1} - S0(X_{i-1}) (t_i - t_{i-1})]`.
pub fn u_statistic(path: &ObservedPath, null_drift: &Expression) -> Result<TestCurve> {
    let (t, x) = (path.times(), &path.values);
    cumulative(path, |i| {
        Ok(x[i] - x[i - 1] - null_drift.eval(x[i - 1])? * (t[i] - t[i - 1]))
    })
}

/// Drift-mismatch component `U_Delta` of `U`:
/// cumulative `eps^-1 (S(X_{i-1}) - S0(X_{i-1})) (t_i - t_{i-1})`.
pub fn drift_discrepancy(
    path: &ObservedPath,
    alt_drift: &Expression,
    null_drift: &Expression,
) -> Result<TestCurve> {
    let (t, x) = (path.times(), &path.values);
    cumulative(path, |i| {
        let prev = x[i - 1];
        Ok((alt_drift.eval(prev)? - null_drift.eval(prev)?) * (t[i] - t[i - 1]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma_hat: f64,
    pub n_increments: usize,
}

/// Realised-volatility estimate `sqrt(eps^-2 sum (X_i - X_{i-1})^2)`.
pub fn sigma_hat(path: &ObservedPath) -> Result<VarianceEstimate> {
    check_path(path)?;
    let qv: f64 = path
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    Ok(VarianceEstimate {
        sigma_hat: qv.sqrt() / path.eps,
        n_increments: path.len() - 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub curve: TestCurve,
    pub sigma_hat: VarianceEstimate,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub critical_value: f64,
    pub eps: f64,
}

/// Machine-readable summary of a [`TestReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub critical_value: f64,
    pub sigma_hat: f64,
    pub sup_u: f64,
    pub n_obs: usize,
    pub eps: f64,
}

impl TestReport {
    pub fn summary(&self) -> TestSummary {
        TestSummary {
            statistic: self.statistic,
            p_value: self.p_value,
            alpha: self.alpha,
            reject: self.reject,
            critical_value: self.critical_value,
            sigma_hat: self.sigma_hat.sigma_hat,
            sup_u: self.curve.sup_abs,
            n_obs: self.curve.len(),
            eps: self.eps,
        }
    }

    /// `reject <=> statistic > critical_value <=> p_value < alpha`.
    pub fn is_consistent(&self) -> bool {
        let by_stat = self.statistic > self.critical_value;
        let by_p = self.p_value < self.alpha;
        self.reject == by_stat && self.reject == by_p
    }
}

/// Test of `H0: S = null_drift` at level `alpha`, rejecting when
/// `D = sup|U| / sigma_hat` strictly exceeds the critical value.
pub fn run_test(path: &ObservedPath, null_drift: &Expression, alpha: f64) -> Result<TestReport> {
    run_test_with(&SupAbsBm::default(), path, null_drift, alpha)
}

pub fn run_test_with(
    law: &SupAbsBm,
    path: &ObservedPath,
    null_drift: &Expression,
    alpha: f64,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let curve = u_statistic(path, null_drift)?;
    let sh = sigma_hat(path)?;
    if !(sh.sigma_hat >= DEGENERATE_SIGMA_HAT) {
        return Err(Error::DegeneratePath {
            sigma_hat: sh.sigma_hat,
        });
    }
    let statistic = curve.sup_abs / sh.sigma_hat;
    let mut critical_value = law.critical_value(alpha)?;
    let p_value = law.p_value(statistic)?;
    let reject = p_value < alpha;
    // The critical value is exact up to one ulp of a monotone p-value; pin it
    // to the statistic if rounding in the series put them on opposite sides.
    if reject && statistic <= critical_value {
        critical_value = f64::from_bits(statistic.to_bits() - 1);
    } else if !reject && statistic > critical_value {
        critical_value = statistic;
    }
    let report = TestReport {
        curve,
        sigma_hat: sh,
        statistic,
        p_value,
        alpha,
        reject,
        critical_value,
        eps: path.eps,
    };
    debug_assert!(report.is_consistent());
    Ok(report)
}

/// `V`: like `U` but with the drift integral over each observation interval
/// taken as the left-point Riemann sum on the fine simulation grid.
pub fn v_statistic(path: &ObservedPath, null_drift: &Expression) -> Result<TestCurve> {
    let fine = path.fine.as_ref().ok_or(Error::MissingFineData)?;
    let x = &path.values;
    let sub = fine.substeps;
    cumulative(path, |i| {
        let mut drift_integral = 0.0;
        for k in (i - 1) * sub..i * sub {
            drift_integral +=
                null_drift.eval(fine.values[k])? * (fine.times[k + 1] - fine.times[k]);
        }
        Ok(x[i] - x[i - 1] - drift_integral)
    })
}

/// `M_u = eps^-1 int_0^u [dX_s - S0(X_s) ds]` on the fine grid.
pub fn m_statistic(path: &ObservedPath, null_drift: &Expression) -> Result<TestCurve> {
    let fine = path.fine.as_ref().ok_or(Error::MissingFineData)?;
    check_path(path)?;
    let inv_eps = 1.0 / path.eps;
    let (t, x) = (&fine.times, &fine.values);
    let mut values = Vec::with_capacity(x.len());
    values.push(0.0);
    let mut acc = 0.0;
    // Accumulate per observation interval so that M at observation times
    // shares the summation order of V.
    for chunk_start in (0..x.len() - 1).step_by(fine.substeps) {
        let mut inc = 0.0;
        let mut drift_integral = 0.0;
        for k in chunk_start..chunk_start + fine.substeps {
            inc = x[k + 1] - x[chunk_start];
            drift_integral += null_drift.eval(x[k])? * (t[k + 1] - t[k]);
            values.push((acc + inc - drift_integral) * inv_eps);
        }
        acc += inc - drift_integral;
    }
    Ok(TestCurve::from_values(t.clone(), values))
}

/// Separation of an alternative drift from the null along the alternative's
/// limit path: `A(u) = int_0^u (S - S0)(x_s^S) ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub curve: TestCurve,
    pub u_star: f64,
    pub max_abs: f64,
    pub separated: bool,
}

pub fn separation_curve(
    alt_drift: &Expression,
    null_drift: &Expression,
    model_with_alt: &ModelSpec,
) -> Result<Separation> {
    let model = model_with_alt.with_drift(alt_drift.clone())?;
    let path = solve_ode(&model, model.horizon() / DEFAULT_ODE_STEPS as f64)?;
    let gap = path
        .values
        .iter()
        .map(|&x| Ok(alt_drift.eval(x)? - null_drift.eval(x)?))
        .collect::<Result<Vec<f64>>>()?;
    let values = cumulative_simpson(&gap, path.step);
    let curve = TestCurve::from_values(path.times, values);
    let (mut u_star, mut max_abs) = (0.0, 0.0f64);
    for (u, v) in curve.u_grid.iter().zip(&curve.values) {
        if v.abs() > max_abs {
            max_abs = v.abs();
            u_star = *u;
        }
    }
    Ok(Separation {
        separated: max_abs >= SEPARATION_TOLERANCE,
        curve,
        u_star,
        max_abs,
    })
}
