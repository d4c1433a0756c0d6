//! Command-line front end.
//!
//! Exit codes: 0 success (or "do not reject" for `test`), 1 usage error,
//! 2 runtime or data error, 3 the test rejected the null hypothesis.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use smalldiff::harness::{
    run_convergence_sweep, run_power_experiment, run_size_experiment, ExperimentConfig,
};
use smalldiff::io::{parse_path_csv, write_curve_csv, write_path_csv, SimulationMeta};
use smalldiff::model::validate;
use smalldiff::simulate::{simulate_path, GridLayout, SamplingGrid};
use smalldiff::statistic::run_test;
use smalldiff::{Error, Expression, ModelSpec, NoiseKey, SupAbsBm};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_REJECT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "smalldiff",
    version,
    about = "Goodness-of-fit test for the drift of a small-noise diffusion observed at discrete times",
    args_override_self = true
)]
struct Cli {
    /// JSON object whose keys are long flag names; expanded before the
    /// explicit flags, which take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test H0: S = null-drift on observed data (CSV with header `t,x`).
    Test(TestArgs),
    /// Simulate one discretely observed path.
    Simulate(SimulateArgs),
    /// Quantile of sup|B| on [0,1].
    Quantile {
        #[arg(long)]
        p: f64,
    },
    /// P(sup|B| > d) on [0,1].
    Pvalue {
        #[arg(long, allow_negative_numbers = true)]
        d: f64,
    },
    /// Empirical rejection rate under the null.
    Size(ExperimentArgs),
    /// Empirical rejection rate under an alternative.
    Power(ExperimentArgs),
    /// Convergence of the approximation fields and of sigma_hat as eps shrinks.
    Sweep(ExperimentArgs),
    /// Numerical check of the model assumptions.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Serialize)]
struct TestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, allow_hyphen_values = true)]
    null_drift: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the U curve as CSV (`u,value`).
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Layout {
    Uniform,
    Jittered,
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    sigma: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    x0: f64,
    #[arg(long = "horizon", alias = "T", default_value_t = 1.0)]
    horizon: f64,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    drift: String,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 2.5)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = Layout::Uniform)]
    layout: Layout,
    #[arg(long, default_value_t = 4)]
    substeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Path CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metadata JSON; defaults to `<out>.json`.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long, allow_hyphen_values = true)]
    null_drift: String,
    /// Alternative drift (power only).
    #[arg(long, allow_hyphen_values = true)]
    alt_drift: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 2.5)]
    gamma: f64,
    /// Fine Euler steps per observation interval (default 4; 8 for sweep).
    #[arg(long)]
    substeps: Option<usize>,
    /// Replications per eps (default 2000 size, 1000 power, 200 sweep).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Layout::Uniform)]
    layout: Layout,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the report table as CSV.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    #[arg(long, allow_hyphen_values = true)]
    drift: String,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, requires = "hi", allow_negative_numbers = true)]
    lo: Option<f64>,
    #[arg(long, requires = "lo", allow_negative_numbers = true)]
    hi: Option<f64>,
}

/// Outcome of a successful command.
enum Done {
    Ok,
    Reject,
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Reject) => ExitCode::from(EXIT_REJECT),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Inserts `--key=value` flags from a `--config` JSON file directly after the
/// subcommand name, so that flags given on the command line override them.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let file = args
        .get(pos + 1)
        .cloned()
        .ok_or("--config needs a file argument")?;
    args.drain(pos..pos + 2);
    let text = std::fs::read_to_string(&file).map_err(|e| format!("{file}: {e}"))?;
    let obj: serde_json::Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| format!("{file}: {e}"))?;
    let mut injected = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Bool(true) => injected.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(json_scalar).collect();
                injected.push(format!("{flag}={}", joined.join(",")));
            }
            other => injected.push(format!("{flag}={}", json_scalar(&other))),
        }
    }
    // args[0] is the binary, args[1] the subcommand.
    let at = 2.min(args.len());
    args.splice(at..at, injected);
    Ok(args)
}

fn json_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn run(cmd: Command) -> Result<Done, Error> {
    match cmd {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a).map(|_| Done::Ok),
        Command::Quantile { p } => {
            let q = SupAbsBm::default().quantile(p)?;
            eprintln!("{}", json!({"command": "quantile", "p": p}));
            println!("{}", decimal17(q));
            Ok(Done::Ok)
        }
        Command::Pvalue { d } => {
            let pv = SupAbsBm::default().p_value(d)?;
            eprintln!("{}", json!({"command": "pvalue", "d": d}));
            println!("{}", decimal17(pv));
            Ok(Done::Ok)
        }
        Command::Size(a) => cmd_experiment("size", a),
        Command::Power(a) => cmd_experiment("power", a),
        Command::Sweep(a) => cmd_experiment("sweep", a),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Positional decimal with 17 significant digits.
fn decimal17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn print_json(value: &impl Serialize) -> Result<(), Error> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_test(a: TestArgs) -> Result<Done, Error> {
    let null = Expression::parse(&a.null_drift)?;
    let parsed = parse_path_csv(BufReader::new(File::open(&a.data)?), a.eps)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let report = run_test(&parsed.path, &null, a.alpha)?;
    if let Some(p) = &a.curve_out {
        write_curve_csv(&report.curve, create(p)?)?;
    }
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        summary: smalldiff::statistic::TestSummary,
        warnings: &'a [String],
        config: &'a TestArgs,
    }
    print_json(&Out {
        summary: report.summary(),
        warnings: &parsed.warnings,
        config: &a,
    })?;
    Ok(if report.reject {
        Done::Reject
    } else {
        Done::Ok
    })
}

fn layout(l: Layout, seed: u64) -> GridLayout {
    match l {
        Layout::Uniform => GridLayout::Uniform,
        Layout::Jittered => GridLayout::Jittered { seed },
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Error> {
    let model = ModelSpec::parse(&a.drift, &a.model.sigma, a.model.x0, a.model.horizon, a.eps)?;
    let grid = SamplingGrid::new(a.model.horizon, a.eps, a.gamma, layout(a.layout, a.seed))?;
    for w in grid.warnings() {
        eprintln!("warning: {w}");
    }
    let key = NoiseKey::new(a.seed, a.replication);
    let path = simulate_path(&model, &grid, a.substeps, key, false)?;
    let meta = SimulationMeta {
        seed: a.seed,
        replication: a.replication,
        eps: a.eps,
        drift: a.drift.clone(),
        sigma: a.model.sigma.clone(),
        x0: a.model.x0,
        horizon: a.model.horizon,
        gamma: a.gamma,
        substeps: a.substeps,
        layout: layout(a.layout, a.seed),
        n_obs: path.len(),
        mesh: grid.mesh(),
        scheme_ok: grid.scheme_ok(),
    };
    match &a.out {
        Some(out) => {
            write_path_csv(&path, create(out)?)?;
            let meta_path = a.meta.clone().unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".json");
                PathBuf::from(s)
            });
            let mut w = create(&meta_path)?;
            serde_json::to_writer_pretty(&mut w, &meta)?;
            writeln!(w)?;
            print_json(&json!({"meta": meta, "config": a}))?;
        }
        None => {
            write_path_csv(&path, io::stdout().lock())?;
            eprintln!(
                "{}",
                serde_json::to_string(&json!({"meta": meta, "config": a}))?
            );
        }
    }
    Ok(())
}

fn cmd_experiment(kind: &str, a: ExperimentArgs) -> Result<Done, Error> {
    let eps_list = if a.eps.is_empty() {
        match kind {
            "sweep" => vec![0.2, 0.1, 0.05],
            _ => vec![0.05],
        }
    } else {
        a.eps.clone()
    };
    let model = ModelSpec::parse(
        &a.null_drift,
        &a.model.sigma,
        a.model.x0,
        a.model.horizon,
        eps_list[0],
    )?;
    let mut cfg = ExperimentConfig::new(model, Expression::parse(&a.null_drift)?, 0);
    cfg.alt_drift = a.alt_drift.as_deref().map(Expression::parse).transpose()?;
    cfg.eps_list = eps_list;
    cfg.gamma = a.gamma;
    cfg.alpha = a.alpha;
    cfg.base_seed = a.seed;
    cfg.layout = layout(a.layout, a.seed);
    cfg.threads = a.threads;
    cfg.substeps = a.substeps.unwrap_or(if kind == "sweep" { 8 } else { 4 });
    cfg.replications = a.reps.unwrap_or(match kind {
        "size" => smalldiff::harness::DEFAULT_SIZE_REPS,
        "power" => smalldiff::harness::DEFAULT_POWER_REPS,
        _ => smalldiff::harness::DEFAULT_SWEEP_REPS,
    });
    if kind == "sweep" {
        let report = run_convergence_sweep(&cfg)?;
        if let Some(p) = &a.csv_out {
            create(p)?.write_all(report.to_csv().as_bytes())?;
        }
        print_json(&report)?;
    } else {
        let report = if kind == "size" {
            run_size_experiment(&cfg)?
        } else {
            run_power_experiment(&cfg)?
        };
        if let Some(p) = &a.csv_out {
            create(p)?.write_all(report.to_csv().as_bytes())?;
        }
        print_json(&report)?;
    }
    Ok(Done::Ok)
}

fn cmd_validate(a: ValidateArgs) -> Result<Done, Error> {
    let model = ModelSpec::parse(&a.drift, &a.model.sigma, a.model.x0, a.model.horizon, a.eps)?;
    let interval = a.lo.zip(a.hi);
    let report = validate(&model, interval)?;
    print_json(&json!({"report": report, "config": a}))?;
    Ok(Done::Ok)
}
