//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use smalldiff::harness::{
    run_convergence_sweep, run_power_experiment, run_size_experiment, ExperimentConfig,
};
use smalldiff::limitdist::SupAbsBm;
use smalldiff::model::{limit_variance, solve_ode, validate};
use smalldiff::simulate::{gronwall_check, increment_moments, simulate_path, GridLayout};
use smalldiff::statistic::{drift_discrepancy, run_test, sigma_hat, u_statistic};
use smalldiff::{Expression, ModelSpec, NoiseKey, ObservedPath, SamplingGrid};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn e(s: &str) -> Expression {
    Expression::parse(s).unwrap()
}

fn null_model(eps: f64) -> ModelSpec {
    ModelSpec::parse("-x", "1", 1.0, 1.0, eps).unwrap()
}

fn level() -> Outcome {
    let cfg = ExperimentConfig::new(null_model(0.05), e("-x"), 2000);
    let start = Instant::now();
    let r = run_size_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let row = &r.rows[0];
    let rate = row.rejection_rate;
    Outcome {
        pass: (0.035..=0.065).contains(&rate) && secs < 120.0,
        detail: format!(
            "rejection rate {rate:.4} (target [0.035, 0.065]), {} of {} rejected, {} errors, {secs:.1} s",
            row.rejections, row.n_reps, row.errors
        ),
    }
}

fn power() -> Outcome {
    let mut cfg = ExperimentConfig::new(null_model(0.05), e("-x"), 1000);
    cfg.alt_drift = Some(e("-x + 1"));
    cfg.eps_list = vec![0.1, 0.05];
    let r = run_power_experiment(&cfg).unwrap();
    let (p10, p05) = (r.rows[0].rejection_rate, r.rows[1].rejection_rate);
    Outcome {
        pass: p05 >= 0.95 && p05 >= p10,
        detail: format!("power {p05:.4} at eps=0.05 (target >= 0.95), {p10:.4} at eps=0.1"),
    }
}

fn sigma_consistency() -> Outcome {
    let cfg = ExperimentConfig::new(null_model(0.05), e("-x"), 500);
    let r = run_size_experiment(&cfg).unwrap();
    let med = r.rows[0]
        .median_sigma_hat_error
        .expect("replications produced a sigma_hat");
    Outcome {
        pass: med < 0.02,
        detail: format!("median |sigma_hat - 1| = {med:.4} (target < 0.02)"),
    }
}

fn approximation_trends() -> Outcome {
    let mut cfg = ExperimentConfig::new(null_model(0.2), e("-x"), 200);
    cfg.eps_list = vec![0.2, 0.1, 0.05];
    cfg.substeps = 8;
    let r = run_convergence_sweep(&cfg).unwrap();
    let uv: Vec<String> = r
        .rows
        .iter()
        .map(|w| format!("{:.3e}", w.median_sup_u_minus_v))
        .collect();
    let vm: Vec<String> = r
        .rows
        .iter()
        .map(|w| format!("{:.3e}", w.median_sup_v_minus_m))
        .collect();
    Outcome {
        pass: r.u_minus_v_decreasing && r.v_minus_m_decreasing,
        detail: format!("median sup|U-V| {uv:?}, median sup|V-M| {vm:?} at eps 0.2, 0.1, 0.05"),
    }
}

/// Empirical CDF of the discrete maximum of `|B|` on `steps` points, from
/// `paths` independently seeded Gaussian random walks.
fn brownian_sup_ecdf(points: &[f64], paths: usize, steps: usize) -> Vec<f64> {
    let scale = (1.0 / steps as f64).sqrt();
    let sups: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = StdRng::seed_from_u64(0x5eed_0000 + i as u64);
            let (mut b, mut sup) = (0.0f64, 0.0f64);
            for _ in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                b += scale * z;
                sup = sup.max(b.abs());
            }
            sup
        })
        .collect();
    points
        .iter()
        .map(|&x| sups.iter().filter(|&&s| s <= x).count() as f64 / paths as f64)
        .collect()
}

fn limit_law() -> Outcome {
    let law = SupAbsBm::default();
    let xs = [1.0, 2.0, 2.2414, 3.0];
    let ecdf = brownian_sup_ecdf(&xs, 20_000, 10_000);
    let mut worst = 0.0f64;
    let mut shift = 0.0;
    for (x, emp) in xs.iter().zip(&ecdf) {
        let d = emp - law.cdf(*x);
        worst = worst.max(d.abs());
        shift += d;
    }
    let q = law.quantile(0.95).unwrap();
    let round_trip = [0.5, 0.9, 0.95, 0.99]
        .iter()
        .map(|&p| (law.cdf(law.quantile(p).unwrap()) - p).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: worst < 0.01 && (2.240..=2.243).contains(&q) && round_trip < 1e-8,
        detail: format!(
            "max |ecdf - cdf| = {worst:.4} (mean shift {:+.4}), quantile(0.95) = {q:.5}, round-trip {round_trip:.1e}",
            shift / xs.len() as f64
        ),
    }
}

fn numerical_kernels() -> Outcome {
    let growth = ModelSpec::parse("x", "x", 1.0, 1.0, 0.1).unwrap();
    let err = |step: f64| {
        let p = solve_ode(&growth, step).unwrap();
        p.times
            .iter()
            .zip(&p.values)
            .map(|(t, v)| (v - t.exp()).abs())
            .fold(0.0, f64::max)
    };
    let errs = [err(0.1), err(0.05), err(0.025)];
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    let path = solve_ode(&growth, 1.0 / 10_000.0).unwrap();
    let lv = limit_variance(&growth, &path).unwrap().sigma_limit;
    let exact = ((1f64.exp().powi(2) - 1.0) / 2.0).sqrt();
    Outcome {
        pass: ratios.iter().all(|&r| r >= 8.0) && (lv - exact).abs() < 1e-6,
        detail: format!(
            "RK4 halving ratios {:.2}, {:.2} (target >= 8), limit sd {lv:.9} vs {exact:.9}",
            ratios[0], ratios[1]
        ),
    }
}

fn sample_paths(m: &ModelSpec, g: &SamplingGrid, n: u64, keep_fine: bool) -> Vec<ObservedPath> {
    (0..n)
        .into_par_iter()
        .map(|r| simulate_path(m, g, 4, NoiseKey::new(0, r), keep_fine).unwrap())
        .collect()
}

fn deviation_and_moment_bounds() -> Outcome {
    let m = null_model(0.05);
    let k = validate(&m, None).unwrap().lipschitz_bound().unwrap();
    let g = SamplingGrid::new(1.0, 0.05, 2.5, GridLayout::Uniform).unwrap();
    let violations = sample_paths(&m, &g, 1000, true)
        .iter()
        .filter(|p| !gronwall_check(&m, p, k, 0.05).unwrap().holds)
        .count();

    let bm = ModelSpec::parse("0", "1", 0.0, 1.0, 0.5).unwrap();
    let g = SamplingGrid::new(1.0, 0.5, 2.5, GridLayout::Uniform).unwrap();
    let c2 = increment_moments(&sample_paths(&bm, &g, 1000, false))
        .unwrap()
        .c2;

    let ou = ModelSpec::parse("-x", "1", 1.0, 1.0, 0.1).unwrap();
    let g = SamplingGrid::new(1.0, 0.1, 2.5, GridLayout::Uniform).unwrap();
    let coarse = increment_moments(&sample_paths(&ou, &g, 1000, false))
        .unwrap()
        .c2;
    let fine = increment_moments(&sample_paths(&ou, &g.refine(4), 1000, false))
        .unwrap()
        .c2;
    let ratio = fine / coarse;
    Outcome {
        pass: violations == 0 && (c2 - 1.0).abs() < 0.1 && (0.5..=2.0).contains(&ratio),
        detail: format!(
            "Gronwall violations {violations}/1000 (K = {k:.4}), C2 = {c2:.4} for Brownian noise, C2 refined/coarse = {fine:.4}/{coarse:.4} = {ratio:.3}"
        ),
    }
}

fn algebraic_identities() -> Outcome {
    let drifts = ["-x", "0", "sin(x)", "x/2 + 1", "-2*tanh(x)", "x^2 - 1"].map(e);
    let mut rng = StdRng::seed_from_u64(8);
    let (mut decomposition, mut homogeneity, mut consistency, mut runs) = (0.0f64, 0.0f64, true, 0);
    for _ in 0..2000 {
        let n = rng.gen_range(2..80);
        let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        times.push(0.0);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values: Vec<f64> = times.iter().map(|_| rng.gen_range(-5.0..5.0)).collect();
        let eps = rng.gen_range(0.01..1.0);
        let p = ObservedPath::from_observations(times.clone(), values.clone(), eps).unwrap();
        let null = &drifts[rng.gen_range(0..drifts.len())];
        let alt = &drifts[rng.gen_range(0..drifts.len())];

        let u = u_statistic(&p, null).unwrap();
        let u_alt = u_statistic(&p, alt).unwrap();
        let delta = drift_discrepancy(&p, alt, null).unwrap();
        for i in 0..u.len() {
            decomposition =
                decomposition.max((u.values[i] - u_alt.values[i] - delta.values[i]).abs());
        }

        let c = 2f64.powi(rng.gen_range(-4..5));
        let q = ObservedPath::from_observations(times, values, eps * c).unwrap();
        let (a, b) = (
            sigma_hat(&p).unwrap().sigma_hat,
            sigma_hat(&q).unwrap().sigma_hat,
        );
        homogeneity = homogeneity.max((a - b * c).abs());

        if let Ok(r) = run_test(&p, null, rng.gen_range(0.001..0.5)) {
            runs += 1;
            consistency &= r.is_consistent()
                && r.reject == (r.statistic > r.critical_value)
                && r.reject == (r.p_value < r.alpha);
        }
    }
    Outcome {
        pass: decomposition <= 1e-10 && homogeneity == 0.0 && consistency,
        detail: format!(
            "decomposition max error {decomposition:.1e}, homogeneity max error {homogeneity:.1e}, tri-consistency held on {runs} runs: {consistency}"
        ),
    }
}

fn reproducibility() -> Outcome {
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("wall_time_secs");
        serde_json::to_string(&v).unwrap()
    };
    let mut cfg = ExperimentConfig::new(null_model(0.1), e("-x"), 300);
    cfg.alt_drift = Some(e("-x + sin(x)"));
    cfg.eps_list = vec![0.2, 0.1, 0.05];
    cfg.layout = GridLayout::Jittered { seed: 3 };
    let mut outputs = Vec::new();
    for threads in [Some(1), Some(4), None, Some(4)] {
        cfg.threads = threads;
        let size = serde_json::to_value(run_size_experiment(&cfg).unwrap()).unwrap();
        let power = serde_json::to_value(run_power_experiment(&cfg).unwrap()).unwrap();
        let sweep = serde_json::to_value(run_convergence_sweep(&cfg).unwrap()).unwrap();
        outputs.push([strip(size), strip(power), strip(sweep)]);
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    Outcome {
        pass: identical,
        detail: format!(
            "size, power and sweep reports identical over runs with 1, 4, default and 4 threads: {identical}"
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("level", level),
        ("power", power),
        ("sigma_hat consistency", sigma_consistency),
        ("approximation trends", approximation_trends),
        ("limit law", limit_law),
        ("numerical kernels", numerical_kernels),
        ("deviation and moment bounds", deviation_and_moment_bounds),
        ("algebraic identities", algebraic_identities),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let out = check();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("acceptance {} {name}: {tag}: {}", i + 1, out.detail);
        failed += usize::from(!out.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
