//! Monte Carlo experiments: rejection rates under the null (level) and under
//! alternatives (power), and convergence sweeps for the intermediate fields
//! and the variance estimator.
//!
//! Replication `r` always draws its noise from key `(base_seed, r)`, and the
//! per-replication outcomes are reduced in replication order, so reports do
//! not depend on the number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::Expression;
use crate::io::fmt_f64;
use crate::limitdist::SupAbsBm;
use crate::model::ModelSpec;
use crate::rng::NoiseKey;
use crate::simulate::{simulate_path, GridLayout, SamplingGrid, DEFAULT_SUBSTEPS};
use crate::statistic::{
    m_statistic, run_test_with, separation_curve, sigma_hat, sup_abs_diff, sup_abs_diff_nested,
    u_statistic, v_statistic,
};
use crate::{Error, Result};

pub const MIN_REPLICATIONS: usize = 100;
/// Power experiments need at least this much separation.
pub const MIN_SEPARATION: f64 = 1e-6;
/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.01;
/// Two-sided 95% normal quantile used by the Wilson interval.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

pub const DEFAULT_SIZE_REPS: usize = 2000;
pub const DEFAULT_POWER_REPS: usize = 1000;
pub const DEFAULT_SWEEP_REPS: usize = 200;

/// Experiment description. `model` supplies `sigma`, `x0` and `T` (its drift
/// and noise level are replaced per run): size and sweep experiments
/// simulate under `null_drift`, power experiments under `alt_drift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub null_drift: Expression,
    #[serde(default)]
    pub alt_drift: Option<Expression>,
    pub gamma: f64,
    pub substeps: usize,
    pub replications: usize,
    pub alpha: f64,
    pub base_seed: u64,
    pub eps_list: Vec<f64>,
    #[serde(default = "uniform_layout")]
    pub layout: GridLayout,
    /// Worker threads; `None` uses the global pool. Does not affect results.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

fn uniform_layout() -> GridLayout {
    GridLayout::Uniform
}

impl ExperimentConfig {
    /// Defaults: `gamma = 2.5`, 4 substeps, `alpha = 0.05`, seed 0, the model's
    /// own noise level as the single `eps`.
    pub fn new(model: ModelSpec, null_drift: Expression, replications: usize) -> Self {
        let eps = model.eps();
        Self {
            model,
            null_drift,
            alt_drift: None,
            gamma: 2.5,
            substeps: DEFAULT_SUBSTEPS,
            replications,
            alpha: 0.05,
            base_seed: 0,
            eps_list: vec![eps],
            layout: GridLayout::Uniform,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::invalid(format!(
                "need at least {MIN_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        if self.eps_list.is_empty() {
            return Err(Error::invalid("eps_list is empty"));
        }
        if let Some(e) = self.eps_list.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::invalid(format!("eps {e} outside (0, 1]")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        Ok(())
    }

    fn run_parallel<T: Send>(&self, f: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<T>> {
        let reps = self.replications as u64;
        let job = || (0..reps).into_par_iter().map(&f).collect::<Vec<T>>();
        match self.threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
                Ok(pool.install(job))
            }
            None => Ok(job()),
        }
    }
}

/// Wilson score interval for `successes` out of `n` at the 95% level.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (
        (centre - half).max(0.0).min(p),
        (centre + half).min(1.0).max(p),
    )
}

/// Median; `None` for an empty sample.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub eps: f64,
    pub n_reps: usize,
    pub rejections: usize,
    pub acceptances: usize,
    pub errors: usize,
    pub rejection_rate: f64,
    pub wilson_ci_lo: f64,
    pub wilson_ci_hi: f64,
    pub median_statistic: Option<f64>,
    /// Median of `|sigma_hat - Sigma| / Sigma` over successful replications.
    pub median_sigma_hat_error: Option<f64>,
    pub sigma_limit: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationInfo {
    pub u_star: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub kind: String,
    pub config: ExperimentConfig,
    pub rows: Vec<McRow>,
    pub separation: Option<SeparationInfo>,
    pub wall_time_secs: f64,
}

impl McReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "eps,n_reps,rejections,acceptances,errors,rate,ci_lo,ci_hi,median_statistic,median_sigma_hat_error,sigma_limit,n_obs\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f64(r.eps),
                r.n_reps,
                r.rejections,
                r.acceptances,
                r.errors,
                fmt_f64(r.rejection_rate),
                fmt_f64(r.wilson_ci_lo),
                fmt_f64(r.wilson_ci_hi),
                opt(r.median_statistic),
                opt(r.median_sigma_hat_error),
                fmt_f64(r.sigma_limit),
                r.n_obs,
            ));
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

enum Outcome {
    Tested {
        reject: bool,
        statistic: f64,
        sigma_hat: f64,
    },
    Failed,
}

fn rejection_experiment(cfg: &ExperimentConfig, drift: &Expression) -> Result<Vec<McRow>> {
    let law = SupAbsBm::default();
    let mut rows = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        let model = cfg.model.with_drift(drift.clone())?.with_eps(eps)?;
        let sigma_limit = model.sigma_limit()?;
        let grid = SamplingGrid::new(model.horizon(), eps, cfg.gamma, cfg.layout)?;
        let outcomes = cfg.run_parallel(|r| {
            let key = NoiseKey::new(cfg.base_seed, r);
            let tested = simulate_path(&model, &grid, cfg.substeps, key, false)
                .and_then(|p| run_test_with(&law, &p, &cfg.null_drift, cfg.alpha));
            match tested {
                Ok(t) => Outcome::Tested {
                    reject: t.reject,
                    statistic: t.statistic,
                    sigma_hat: t.sigma_hat.sigma_hat,
                },
                Err(_) => Outcome::Failed,
            }
        })?;
        let n = outcomes.len();
        let (mut rejections, mut acceptances, mut errors) = (0, 0, 0);
        let mut stats = Vec::with_capacity(n);
        let mut sh_errors = Vec::with_capacity(n);
        for o in &outcomes {
            match *o {
                Outcome::Tested {
                    reject,
                    statistic,
                    sigma_hat,
                } => {
                    if reject {
                        rejections += 1;
                    } else {
                        acceptances += 1;
                    }
                    stats.push(statistic);
                    if sigma_limit > 0.0 {
                        sh_errors.push((sigma_hat - sigma_limit).abs() / sigma_limit);
                    }
                }
                Outcome::Failed => errors += 1,
            }
        }
        if errors as f64 > MAX_FAILURE_RATE * n as f64 {
            return Err(Error::TooManyFailures {
                eps,
                failed: errors,
                total: n,
            });
        }
        let (lo, hi) = wilson_interval(rejections, n);
        rows.push(McRow {
            eps,
            n_reps: n,
            rejections,
            acceptances,
            errors,
            rejection_rate: rejections as f64 / n as f64,
            wilson_ci_lo: lo,
            wilson_ci_hi: hi,
            median_statistic: median(&stats),
            median_sigma_hat_error: median(&sh_errors),
            sigma_limit,
            n_obs: grid.times().len(),
        });
    }
    Ok(rows)
}

/// Level study: paths simulated under the null drift and tested against it.
pub fn run_size_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let start = Instant::now();
    let rows = rejection_experiment(cfg, &cfg.null_drift)?;
    Ok(McReport {
        kind: "size".into(),
        config: cfg.clone(),
        rows,
        separation: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Power study: paths simulated under `alt_drift`, tested against the null.
/// The alternative must be separated from the null along its limit path.
pub fn run_power_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let alt = cfg
        .alt_drift
        .as_ref()
        .ok_or_else(|| Error::invalid("power experiment needs an alternative drift"))?;
    let sep = separation_curve(alt, &cfg.null_drift, &cfg.model)?;
    if !(sep.max_abs > MIN_SEPARATION) {
        return Err(Error::NotSeparated {
            max_abs: sep.max_abs,
        });
    }
    let start = Instant::now();
    let rows = rejection_experiment(cfg, alt)?;
    Ok(McReport {
        kind: "power".into(),
        config: cfg.clone(),
        rows,
        separation: Some(SeparationInfo {
            u_star: sep.u_star,
            max_abs: sep.max_abs,
        }),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub n_reps: usize,
    pub n_obs: usize,
    pub median_sup_u_minus_v: f64,
    pub median_sup_v_minus_m: f64,
    /// `None` when the limit standard deviation is zero.
    pub median_sigma_hat_rel_error: Option<f64>,
    pub sigma_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub u_minus_v_decreasing: bool,
    pub v_minus_m_decreasing: bool,
    pub sigma_hat_error_decreasing: bool,
    pub wall_time_secs: f64,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "eps,n_reps,n_obs,median_sup_u_minus_v,median_sup_v_minus_m,median_sigma_hat_rel_error,sigma_limit\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_f64(r.eps),
                r.n_reps,
                r.n_obs,
                fmt_f64(r.median_sup_u_minus_v),
                fmt_f64(r.median_sup_v_minus_m),
                opt(r.median_sigma_hat_rel_error),
                fmt_f64(r.sigma_limit),
            ));
        }
        s
    }
}

fn strictly_decreasing(v: impl IntoIterator<Item = Option<f64>>) -> bool {
    let v: Vec<Option<f64>> = v.into_iter().collect();
    v.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    })
}

/// Medians of `sup|U - V|`, `sup|V - M|` and the relative error of
/// `sigma_hat` for each noise level, simulated under the null drift with
/// fine paths retained.
pub fn run_convergence_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    if cfg.eps_list.len() < 3 || cfg.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid(
            "sweep needs at least three strictly decreasing eps values",
        ));
    }
    let start = Instant::now();
    let null = &cfg.null_drift;
    let mut rows = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        let model = cfg.model.with_drift(null.clone())?.with_eps(eps)?;
        let sigma_limit = model.sigma_limit()?;
        let grid = SamplingGrid::new(model.horizon(), eps, cfg.gamma, cfg.layout)?;
        let results = cfg.run_parallel(|r| -> Result<(f64, f64, f64)> {
            let path = simulate_path(
                &model,
                &grid,
                cfg.substeps,
                NoiseKey::new(cfg.base_seed, r),
                true,
            )?;
            let u = u_statistic(&path, null)?;
            let v = v_statistic(&path, null)?;
            let m = m_statistic(&path, null)?;
            let sh = sigma_hat(&path)?.sigma_hat;
            Ok((sup_abs_diff(&u, &v), sup_abs_diff_nested(&v, &m), sh))
        })?;
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let uv: Vec<f64> = results.iter().map(|r| r.0).collect();
        let vm: Vec<f64> = results.iter().map(|r| r.1).collect();
        let rel: Vec<f64> = if sigma_limit > 0.0 {
            results
                .iter()
                .map(|r| (r.2 - sigma_limit).abs() / sigma_limit)
                .collect()
        } else {
            Vec::new()
        };
        rows.push(SweepRow {
            eps,
            n_reps: results.len(),
            n_obs: grid.times().len(),
            median_sup_u_minus_v: median(&uv).expect("replications >= 100"),
            median_sup_v_minus_m: median(&vm).expect("replications >= 100"),
            median_sigma_hat_rel_error: median(&rel),
            sigma_limit,
        });
    }
    Ok(SweepReport {
        config: cfg.clone(),
        u_minus_v_decreasing: strictly_decreasing(
            rows.iter().map(|r| Some(r.median_sup_u_minus_v)),
        ),
        v_minus_m_decreasing: strictly_decreasing(
            rows.iter().map(|r| Some(r.median_sup_v_minus_m)),
        ),
        sigma_hat_error_decreasing: strictly_decreasing(
            rows.iter().map(|r| r.median_sigma_hat_rel_error),
        ),
        rows,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
