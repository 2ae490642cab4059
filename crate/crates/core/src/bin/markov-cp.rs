use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use markov_cp::chains::{simulate_ar1_with, simulate_finite, Ar1Spec, Distribution, FiniteKernel};
use markov_cp::estimation::{empirical_kernel, estimate_rho_autocorr, estimate_spectrum, returns};
use markov_cp::harness::{
    run_coverage_experiment, run_coverage_experiment_serial, run_rolling_experiment, ExperimentConfig, KPolicy, Method,
    RollingConfig,
};
use markov_cp::io::{emit_plot_data, format_report, load_series_csv, rolling_rows, series_as_states, sweep_rows, write_series};
use markov_cp::rng::seeded_rng;
use markov_cp::theory::{
    gamma_norestart, gamma_optimal_r, gamma_restart, iid_coverage_bounds, k_star, ksplit_gap, ksplit_quantile_bound,
    quantile_deviation_bound, BoundInputs, ModelAccuracy, Scenario,
};
use markov_cp::{Error, Result};
use rand_distr::{Distribution as _, StandardNormal};

/// Conformal prediction for Markovian data.
#[derive(Parser)]
#[command(name = "markov-cp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a chain and write `t,value` CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo coverage experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Rolling-window CP on the returns of a price series.
    Rolling(RollingArgs),
    /// Estimate the spectral gap from a state trajectory.
    EstimateGap(EstimateGapArgs),
    /// Estimate the ergodicity rate from autocorrelation decay.
    EstimateRho(EstimateRhoArgs),
    /// Evaluate the coverage-gap calculators.
    Bounds {
        #[command(subcommand)]
        bound: BoundCommand,
    },
    /// Optimal thinning step for calibration size n and rate rho.
    Kstar(KstarArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainKind {
    LazyWalk,
    Ar1,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    chain: ChainKind,
    /// Cycle length of the lazy walk.
    #[arg(long, default_value_t = 20)]
    w: usize,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long, default_value = "json")]
    format: String,
    /// Repeat the experiment for each calibration size in this list.
    #[arg(long, value_delimiter = ',')]
    sweep_n: Vec<usize>,
    /// Long-format plot CSV for the sweep.
    #[arg(long)]
    plot_out: Option<PathBuf>,
    /// Run trials on one thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct RollingArgs {
    /// Price series as `t,value` CSV.
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    train: usize,
    #[arg(long)]
    cal: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Comma-separated subset of split, ksplit, ksplit_corrected.
    #[arg(long, value_delimiter = ',', default_value = "split,ksplit,ksplit_corrected")]
    method: Vec<String>,
    /// fixed:<int>, kstar or adaptive.
    #[arg(long, default_value = "adaptive")]
    k: String,
    /// Test points per coverage bucket.
    #[arg(long, default_value_t = 1440)]
    bucket: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format plot CSV of bucket coverage.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateGapArgs {
    /// State trajectory as `t,value` CSV with integer values.
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    states: usize,
}

#[derive(Args)]
struct EstimateRhoArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    /// Convert prices to simple returns first.
    #[arg(long)]
    returns: bool,
}

#[derive(Args)]
struct KstarArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rho: f64,
}

#[derive(Args)]
struct BoundArgs {
    /// Calibration size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Training size.
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    /// Separation between training and calibration.
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Thinning step.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    t_mix: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Comma-separated TV distances of the calibration chain after 1, 2, … steps.
    #[arg(long, value_delimiter = ',')]
    delta1: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta_n_train: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_n_n_train_1: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_r: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_k: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_prime_k: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_n1: f64,
}

impl BoundArgs {
    fn inputs(&self) -> BoundInputs {
        BoundInputs {
            n: self.n,
            n_train: self.n_train,
            r: self.r,
            k: self.k,
            alpha: self.alpha,
            t_mix: self.t_mix,
            rho: self.rho,
            delta1: self.delta1.clone(),
            delta_n_train: self.delta_n_train,
            delta_n_n_train_1: self.delta_n_n_train_1,
            beta_r: self.beta_r,
            beta_k: self.beta_k,
            beta_prime_k: self.beta_prime_k,
            beta_n1: self.beta_n1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Restart,
    NoRestart,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Restart => Scenario::Restart,
            ScenarioArg::NoRestart => Scenario::NoRestart,
        }
    }
}

#[derive(Subcommand)]
enum BoundCommand {
    /// Coverage gap with an independent calibration restart.
    GammaRestart {
        #[arg(long)]
        u: f64,
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Coverage gap on one trajectory with separation r.
    Gamma {
        #[arg(long)]
        u: f64,
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Coverage gap minimized over u.
    GammaOpt {
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Optimal thinning step.
    Kstar(KstarArgs),
    /// Coverage band of K-split CP.
    KsplitGap {
        #[arg(long, value_enum, default_value = "restart")]
        scenario: ScenarioArg,
        /// Use the non-stationary surrogate beta-prime-k.
        #[arg(long)]
        surrogate: bool,
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Quantile-deviation bound.
    QuantileDev {
        #[arg(long, value_enum, default_value = "restart")]
        scenario: ScenarioArg,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 0.0)]
        c_n: f64,
        #[arg(long, default_value_t = 0.0)]
        d_n: f64,
        /// Confidence parameter.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Apply the K-split substitution with K = --k.
        #[arg(long)]
        ksplit: bool,
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Exchangeable-data coverage band.
    Iid {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("JSON values serialize"))?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut out = output(&a.out)?;
    match a.chain {
        ChainKind::LazyWalk => {
            let states = simulate_finite(&FiniteKernel::lazy_walk(a.w)?, &Distribution::uniform(a.w)?, a.len, a.seed)?;
            write_series(&mut out, &states)?;
        }
        ChainKind::Ar1 => {
            let spec = Ar1Spec::new(a.theta, a.omega)?;
            let mut rng = seeded_rng(a.seed);
            let z: f64 = StandardNormal.sample(&mut rng);
            let path = simulate_ar1_with(&spec, spec.stationary_variance().sqrt() * z, a.len, &mut rng)?;
            write_series(&mut out, &path)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let format = a.format.parse()?;
    let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&a.config)?)?;
    let run = |cfg: &ExperimentConfig| if a.serial { run_coverage_experiment_serial(cfg) } else { run_coverage_experiment(cfg) };
    let report = run(&cfg)?;
    let mut out = output(&a.out)?;
    out.write_all(format_report(&report, format)?.as_bytes())?;
    out.flush()?;
    if !a.sweep_n.is_empty() {
        let sweep = a
            .sweep_n
            .iter()
            .map(|&n| Ok((n as f64, run(&ExperimentConfig { n_cal: n, ..cfg.clone() })?)))
            .collect::<Result<Vec<_>>>()?;
        let path = a.plot_out.as_ref().ok_or_else(|| Error::Config("--sweep-n needs --plot-out".into()))?;
        emit_plot_data(&sweep_rows(&sweep), &mut File::create(path)?)?;
    }
    Ok(())
}

fn rolling(a: &RollingArgs) -> Result<()> {
    let series = load_series_csv(&a.series)?;
    let cfg = RollingConfig {
        train_len: a.train,
        calib_len: a.cal,
        alpha: a.alpha,
        methods: a.method.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
        k_policy: a.k.parse::<KPolicy>()?,
        bucket_len: a.bucket,
    };
    let report = run_rolling_experiment(&series.values, &cfg)?;
    let mut out = output(&a.out)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidData(e.to_string()))?)?;
    out.flush()?;
    if let Some(path) = &a.plot_out {
        emit_plot_data(&rolling_rows(&report), &mut File::create(path)?)?;
    }
    Ok(())
}

fn estimate_gap(a: &EstimateGapArgs) -> Result<()> {
    let states = series_as_states(&load_series_csv(&a.traj)?, a.states)?;
    let ek = empirical_kernel(&states, a.states)?;
    let s = estimate_spectrum(&ek)?;
    let rho = s.rho.clamp(markov_cp::estimation::RATE_CLIP, 1.0 - markov_cp::estimation::RATE_CLIP);
    print_json(&json!({
        "states": a.states,
        "length": states.len(),
        "lambda2": s.lambda2,
        "lambda_min": s.lambda_min,
        "rho_hat": rho,
        "gap_hat": 1.0 - rho,
    }))
}

fn estimate_rho(a: &EstimateRhoArgs) -> Result<()> {
    let values = load_series_csv(&a.series)?.values;
    let series = if a.returns { returns(&values)? } else { values };
    let rho = estimate_rho_autocorr(&series, a.max_lag)?;
    print_json(&json!({ "rho_hat": rho, "max_lag": a.max_lag, "length": series.len() }))
}

fn kstar(a: &KstarArgs) -> Result<()> {
    let k = k_star(a.n, a.rho)?;
    print_json(&json!({ "k_star": k.value, "rounded": k.rounded }))
}

fn bounds(cmd: &BoundCommand) -> Result<()> {
    let v = match cmd {
        BoundCommand::GammaRestart { u, b } => json!({ "gamma": gamma_restart(*u, &b.inputs())? }),
        BoundCommand::Gamma { u, b } => json!({ "gamma": gamma_norestart(*u, b.r, &b.inputs())? }),
        BoundCommand::GammaOpt { b } => {
            let g = gamma_optimal_r(&b.inputs())?;
            json!({ "gamma": g.value, "arg_u": g.arg_u, "arg_r": g.arg_r })
        }
        BoundCommand::Kstar(a) => return kstar(a),
        BoundCommand::KsplitGap { scenario, surrogate, b } => {
            let separation = match scenario {
                ScenarioArg::Restart => None,
                ScenarioArg::NoRestart => Some(b.r),
            };
            let (low, high) = ksplit_gap(b.n, b.k, separation, &b.inputs(), !surrogate)?;
            json!({
                "low": low,
                "high": high,
                "coverage_lower": 1.0 - b.alpha - low,
                "coverage_upper": 1.0 - b.alpha + high,
            })
        }
        BoundCommand::QuantileDev { scenario, kappa, c_n, d_n, delta, ksplit, b } => {
            let acc = ModelAccuracy { kappa: *kappa, c_n: *c_n, d_n: *d_n };
            let q = if *ksplit {
                ksplit_quantile_bound(&b.inputs(), acc, *delta, (*scenario).into())?
            } else {
                quantile_deviation_bound(&b.inputs(), acc, *delta, (*scenario).into())?
            };
            json!({ "u_star": q.u_star, "deviation": q.deviation })
        }
        BoundCommand::Iid { m, alpha } => {
            let (lower, upper) = iid_coverage_bounds(*m, *alpha)?;
            json!({ "lower": lower, "upper": upper })
        }
    };
    print_json(&v)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Rolling(a) => rolling(a),
        Command::EstimateGap(a) => estimate_gap(a),
        Command::EstimateRho(a) => estimate_rho(a),
        Command::Bounds { bound } => bounds(bound),
        Command::Kstar(a) => kstar(a),
    }
}

/// 1 for problems with the user's input, 2 for failures of the program or
/// its environment.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(io) => match io.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied | io::ErrorKind::InvalidData => 1,
            _ => 2,
        },
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}
