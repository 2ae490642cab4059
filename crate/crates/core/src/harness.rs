//! Model fitting and end-to-end coverage experiments.
//!
//! Each trial draws its randomness from its own ChaCha stream, so trials can
//! run in any order on any thread and the aggregated report is bitwise
//! reproducible from the config alone.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::chains::{
    simulate_ar1_with, simulate_finite_with, spectral_gap_exact, Ar1Spec, Distribution, FiniteKernel, Trajectory,
};
use crate::conformal::{calibrate_scores, residual_scores, rolling_cp_fitted, PointPredictor, RankRule, WindowK};
use crate::error::{invalid, Error, Result};
use crate::estimation::{adaptive_k, empirical_kernel, estimate_rho, estimate_rho_autocorr, returns};
use crate::rng::{trial_rng, SimRng};
use crate::theory::k_star;

/// Largest lag used by autocorrelation-based rate estimates.
pub const DEFAULT_MAX_LAG: usize = 20;

/// `y = slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

impl PointPredictor for LinearModel {
    fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares of responses on covariates.
pub fn fit_linear(train: &Trajectory) -> Result<LinearModel> {
    let n = train.len();
    if n < 2 {
        return Err(Error::SingularFit(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let x_bar = train.covariates.iter().sum::<f64>() / nf;
    let y_bar = train.responses.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in train.pairs() {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
    }
    if sxx == 0.0 {
        return Err(Error::SingularFit("all covariates are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearModel { slope, intercept: y_bar - slope * x_bar })
}

/// `x_{t+1} ≈ theta·x_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub theta: f64,
}

impl PointPredictor for ArModel {
    fn predict(&self, x: f64) -> f64 {
        self.theta * x
    }
}

/// No-intercept least squares of `x_{t+1}` on `x_t`.
pub fn fit_ar_predictor(train: &[f64]) -> Result<ArModel> {
    if train.len() < 3 {
        return Err(Error::SingularFit(format!("need at least 3 values, got {}", train.len())));
    }
    let (num, den) = train.windows(2).fold((0.0, 0.0), |(n, d), w| (n + w[0] * w[1], d + w[0] * w[0]));
    ar_from_moments(num, den)
}

/// [`fit_ar_predictor`] on `(x_t, x_{t+1})` pairs stored as a trajectory.
pub fn fit_ar_pairs(train: &Trajectory) -> Result<ArModel> {
    if train.len() < 2 {
        return Err(Error::SingularFit(format!("need at least 2 pairs, got {}", train.len())));
    }
    let (num, den) = train.pairs().fold((0.0, 0.0), |(n, d), (x, y)| (n + x * y, d + x * x));
    ar_from_moments(num, den)
}

fn ar_from_moments(num: f64, den: f64) -> Result<ArModel> {
    if den == 0.0 {
        return Err(Error::SingularFit("all lagged values are zero".into()));
    }
    Ok(ArModel { theta: num / den })
}

/// Half-width `q_α = σ·Φ⁻¹(1 − α/2)` of the optimal interval under
/// `N(0, σ²)` noise and a correct model.
pub fn optimal_halfwidth_gaussian(alpha: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal parameters are valid");
    Ok(sigma * normal.inverse_cdf(1.0 - alpha / 2.0))
}

/// Conformal method compared in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Split,
    Ksplit,
    KsplitCorrected,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Split, Method::Ksplit, Method::KsplitCorrected];

    pub fn name(self) -> &'static str {
        match self {
            Method::Split => "split",
            Method::Ksplit => "ksplit",
            Method::KsplitCorrected => "ksplit_corrected",
        }
    }

    fn rule(self) -> RankRule {
        match self {
            Method::KsplitCorrected => RankRule::Corrected,
            _ => RankRule::Standard,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected split, ksplit or ksplit_corrected)")))
    }
}

/// How the thinning step of the K-split methods is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    Fixed(usize),
    /// `K*` from the true ergodicity rate of the simulated chain.
    Kstar,
    /// `K̂` from a rate estimated on the training data.
    Adaptive,
}

impl FromStr for KPolicy {
    type Err = Error;

    /// Parses `fixed:<int>`, `kstar` or `adaptive`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kstar" => Ok(KPolicy::Kstar),
            "adaptive" => Ok(KPolicy::Adaptive),
            _ => {
                let k = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("bad K policy `{s}` (expected fixed:<int>, kstar or adaptive)")))?;
                if k == 0 {
                    return Err(Error::Config("fixed K must be at least 1".into()));
                }
                Ok(KPolicy::Fixed(k))
            }
        }
    }
}

/// Finite-state chain on `{0, …, w−1}` with responses `slope·x + noise_std·ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub w: usize,
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

fn default_slope() -> f64 {
    0.5
}

fn default_noise_std() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ar1Config {
    pub theta: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainConfig {
    /// Lazy random walk on the cycle `Z/wZ`.
    LazyWalk(WalkConfig),
    /// Gaussian AR(1) predicting the next value from the current one.
    Ar1(Ar1Config),
    /// Independent uniform draws from `{0, …, w−1}`.
    IidUniform(WalkConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chain: ChainConfig,
    #[serde(rename = "N_train", default = "default_size")]
    pub n_train: usize,
    #[serde(default = "default_size")]
    pub n_cal: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_policy")]
    pub k_policy: KPolicy,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_size() -> usize {
    2000
}

fn default_alpha() -> f64 {
    0.1
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_policy() -> KPolicy {
    KPolicy::Kstar
}

fn default_trials() -> usize {
    500
}

impl ExperimentConfig {
    /// Desk-scale defaults for `chain`.
    pub fn new(chain: ChainConfig) -> Self {
        Self {
            chain,
            n_train: default_size(),
            n_cal: default_size(),
            alpha: default_alpha(),
            methods: default_methods(),
            k_policy: default_policy(),
            trials: default_trials(),
            master_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.n_train < 2 || self.n_cal == 0 {
            return bad(format!("need N_train >= 2 and n_cal >= 1, got {} and {}", self.n_train, self.n_cal));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.k_policy == KPolicy::Fixed(0) {
            return bad("fixed K must be at least 1".into());
        }
        match self.chain {
            ChainConfig::LazyWalk(c) | ChainConfig::IidUniform(c) => {
                if c.w < 3 {
                    return bad(format!("w must be at least 3, got {}", c.w));
                }
                if !c.slope.is_finite() || !(c.noise_std >= 0.0 && c.noise_std.is_finite()) {
                    return bad("slope must be finite and noise_std finite and nonnegative".into());
                }
            }
            ChainConfig::Ar1(c) => {
                Ar1Spec::new(c.theta, c.omega).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Half-width of the optimal interval under the chain's noise law, when positive.
    pub fn optimal_halfwidth(&self) -> Option<f64> {
        let sigma = match self.chain {
            ChainConfig::LazyWalk(c) | ChainConfig::IidUniform(c) => c.noise_std,
            ChainConfig::Ar1(c) => c.omega,
        };
        optimal_halfwidth_gaussian(self.alpha, sigma).ok().filter(|q| *q > 0.0)
    }
}

/// Result of one method on one trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub covered: bool,
    /// Calibrated half-width, possibly infinite.
    pub q_hat: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: u64,
    pub methods: Vec<MethodOutcome>,
}

/// Aggregated statistics for one method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub coverage_mean: f64,
    pub coverage_se: f64,
    /// Mean finite half-width; `None` when every interval was infinite.
    pub mean_halfwidth: Option<f64>,
    /// Median of `|q̂ − q_α| / q_α` over finite intervals; `None` when
    /// `q_α` is unknown or zero.
    pub relative_length_error: Option<f64>,
    /// Median thinning step.
    pub k_used: usize,
    pub trials: usize,
    pub infinite_intervals: usize,
}

/// Per-method statistics keyed by method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageReport(pub BTreeMap<Method, MethodStats>);

impl CoverageReport {
    pub fn get(&self, method: Method) -> Option<&MethodStats> {
        self.0.get(&method)
    }
}

/// Chain-specific state shared by all trials.
struct Prepared {
    kernel: Option<FiniteKernel>,
    init: Option<Distribution>,
    ar1: Option<Ar1Spec>,
    /// Thinning step when it does not depend on the trial.
    fixed_k: Option<usize>,
}

fn k_from_rate(n: usize, rho: f64) -> Result<usize> {
    if rho <= 0.0 {
        return Ok(1);
    }
    Ok(k_star(n, rho)?.rounded)
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (kernel, init, ar1) = match cfg.chain {
        ChainConfig::LazyWalk(c) => (Some(FiniteKernel::lazy_walk(c.w)?), Some(Distribution::uniform(c.w)?), None),
        ChainConfig::IidUniform(c) => {
            let pi = Distribution::uniform(c.w)?;
            (Some(FiniteKernel::independent(&pi)), Some(pi), None)
        }
        ChainConfig::Ar1(c) => (None, None, Some(Ar1Spec::new(c.theta, c.omega)?)),
    };
    let fixed_k = match cfg.k_policy {
        KPolicy::Fixed(k) => Some(k),
        KPolicy::Adaptive => None,
        KPolicy::Kstar => Some(match (&kernel, &init, &ar1) {
            (Some(kernel), Some(pi), _) => k_from_rate(cfg.n_cal, spectral_gap_exact(kernel, pi)?.rho)?,
            (_, _, Some(spec)) => k_from_rate(cfg.n_cal, spec.theta())?,
            _ => unreachable!("every chain is finite or AR(1)"),
        }),
    };
    Ok(Prepared { kernel, init, ar1, fixed_k })
}

/// `n` pairs, plus the visited states for finite chains.
fn simulate_pairs(cfg: &ExperimentConfig, prep: &Prepared, n: usize, rng: &mut SimRng) -> Result<(Trajectory, Option<Vec<usize>>)> {
    match (cfg.chain, &prep.kernel, &prep.init, &prep.ar1) {
        (ChainConfig::LazyWalk(c) | ChainConfig::IidUniform(c), Some(kernel), Some(init), _) => {
            let states = simulate_finite_with(kernel, init, n, rng)?;
            let xs: Vec<f64> = states.iter().map(|&s| s as f64).collect();
            let ys = xs
                .iter()
                .map(|&x| {
                    let eps: f64 = StandardNormal.sample(rng);
                    c.slope * x + c.noise_std * eps
                })
                .collect();
            Ok((Trajectory::new(xs, ys, 0)?, Some(states)))
        }
        (_, _, _, Some(spec)) => {
            let z: f64 = StandardNormal.sample(rng);
            let x0 = spec.stationary_variance().sqrt() * z;
            let path = simulate_ar1_with(spec, x0, n + 1, rng)?;
            Ok((Trajectory::new(path[..n].to_vec(), path[1..].to_vec(), 0)?, None))
        }
        _ => unreachable!("prepared state matches the chain"),
    }
}

enum Model {
    Linear(LinearModel),
    Ar(ArModel),
}

impl PointPredictor for Model {
    fn predict(&self, x: f64) -> f64 {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Ar(m) => m.predict(x),
        }
    }
}

fn autocorr_k(series: &[f64], estimate: impl Fn(f64) -> Result<usize>) -> Result<usize> {
    let max_lag = DEFAULT_MAX_LAG.min(series.len().saturating_sub(1) / 4);
    if max_lag < 2 {
        return Ok(1);
    }
    match estimate_rho_autocorr(series, max_lag) {
        Ok(rho) => estimate(rho),
        Err(Error::InsufficientData(_)) => Ok(1),
        Err(e) => Err(e),
    }
}

fn run_trial(cfg: &ExperimentConfig, prep: &Prepared, trial: u64) -> Result<TrialOutcome> {
    let mut rng = trial_rng(cfg.master_seed, trial);
    let (n_train, n_cal) = (cfg.n_train, cfg.n_cal);
    let (data, states) = simulate_pairs(cfg, prep, n_train + n_cal + 1, &mut rng)?;
    let train = data.slice(0..n_train);
    let calib = data.slice(n_train..n_train + n_cal);
    let model = match cfg.chain {
        ChainConfig::Ar1(_) => Model::Ar(fit_ar_pairs(&train)?),
        _ => Model::Linear(fit_linear(&train)?),
    };
    let scores = residual_scores(&model, &calib)?;
    let (x, y) = (data.covariates[n_train + n_cal], data.responses[n_train + n_cal]);
    let test_score = (y - model.predict(x)).abs();
    let k = match prep.fixed_k {
        Some(k) => k,
        None => match &states {
            Some(states) => match empirical_kernel(&states[..n_train], prep.kernel.as_ref().map_or(0, |k| k.size())) {
                Ok(ek) => adaptive_k(n_cal.max(2), estimate_rho(&ek)?)?,
                Err(Error::InsufficientData(_)) => 1,
                Err(e) => return Err(e),
            },
            None => autocorr_k(&train.covariates, |rho| adaptive_k(n_cal.max(2), rho))?,
        },
    };
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let k = if method == Method::Split { 1 } else { k };
            let (q_hat, _, _) = calibrate_scores(scores.as_slice(), cfg.alpha, k, method.rule())?;
            Ok(MethodOutcome { method, covered: test_score <= q_hat, q_hat, k })
        })
        .collect::<Result<_>>()?;
    Ok(TrialOutcome { trial, methods })
}

/// Per-trial outcomes in trial order, computed in parallel.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    let prep = prepare(cfg)?;
    (0..cfg.trials as u64).into_par_iter().map(|t| run_trial(cfg, &prep, t)).collect()
}

/// Single-threaded [`run_trials`].
pub fn run_trials_serial(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    let prep = prepare(cfg)?;
    (0..cfg.trials as u64).map(|t| run_trial(cfg, &prep, t)).collect()
}

pub fn run_coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    Ok(aggregate(&cfg.methods, cfg.optimal_halfwidth(), run_trials(cfg)?))
}

/// Single-threaded [`run_coverage_experiment`]; the output is identical.
pub fn run_coverage_experiment_serial(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    Ok(aggregate(&cfg.methods, cfg.optimal_halfwidth(), run_trials_serial(cfg)?))
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) })
}

fn binomial(hits: usize, total: usize) -> (f64, f64) {
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

/// Reduce trial outcomes to a report. Outcomes are sorted by trial index
/// first, so the result does not depend on their order.
pub fn aggregate(methods: &[Method], q_alpha: Option<f64>, mut outcomes: Vec<TrialOutcome>) -> CoverageReport {
    outcomes.sort_by_key(|o| o.trial);
    let mut report = BTreeMap::new();
    for &method in methods {
        let rows: Vec<MethodOutcome> =
            outcomes.iter().filter_map(|o| o.methods.iter().find(|m| m.method == method).copied()).collect();
        if rows.is_empty() {
            continue;
        }
        let (coverage_mean, coverage_se) = binomial(rows.iter().filter(|r| r.covered).count(), rows.len());
        let finite: Vec<f64> = rows.iter().map(|r| r.q_hat).filter(|q| q.is_finite()).collect();
        let mean_halfwidth = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        let relative_length_error =
            q_alpha.and_then(|q| median(&mut finite.iter().map(|h| (h - q).abs() / q).collect::<Vec<_>>()));
        let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        report.insert(
            method,
            MethodStats {
                coverage_mean,
                coverage_se,
                mean_halfwidth,
                relative_length_error,
                k_used: ks[(ks.len() - 1) / 2],
                trials: rows.len(),
                infinite_intervals: rows.len() - finite.len(),
            },
        );
    }
    CoverageReport(report)
}

/// Settings for [`run_rolling_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct RollingConfig {
    pub train_len: usize,
    pub calib_len: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub k_policy: KPolicy,
    /// Number of consecutive test points per coverage bucket.
    pub bucket_len: usize,
}

/// Overall rolling-window statistics for one method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingSummary {
    pub coverage_mean: f64,
    pub coverage_se: f64,
    pub mean_halfwidth: Option<f64>,
    pub k_median: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub steps: usize,
    pub infinite_intervals: usize,
    /// Every window produced the whole line.
    pub all_infinite: bool,
}

/// Coverage over one block of consecutive test points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketCoverage {
    pub method: Method,
    pub bucket: usize,
    /// Position in the returns stream of the first predicted return.
    pub first_index: usize,
    pub steps: usize,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub summary: BTreeMap<Method, RollingSummary>,
    pub buckets: Vec<BucketCoverage>,
}

/// No-intercept AR fit that predicts zero on an all-zero window.
fn fit_ar_lenient(train: &Trajectory) -> Result<ArModel> {
    match fit_ar_pairs(train) {
        Err(Error::SingularFit(_)) => Ok(ArModel { theta: 0.0 }),
        other => other,
    }
}

/// Rolling-window CP on the returns of a positive price series, predicting
/// each return from the previous one with a refitted AR model.
pub fn run_rolling_experiment(series: &[f64], cfg: &RollingConfig) -> Result<RollingReport> {
    if cfg.bucket_len == 0 {
        return Err(invalid("bucket length must be at least 1"));
    }
    if cfg.methods.is_empty() {
        return Err(invalid("at least one method is required"));
    }
    let r = returns(series)?;
    if r.len() < 2 {
        return Err(Error::InsufficientData("need at least three prices".into()));
    }
    let data = Trajectory::new(r[..r.len() - 1].to_vec(), r[1..].to_vec(), 0)?;
    let calib_len = cfg.calib_len;
    let estimated = |train: &Trajectory, _: usize| -> Result<usize> {
        match cfg.k_policy {
            KPolicy::Kstar => autocorr_k(&train.covariates, |rho| k_from_rate(calib_len.max(2), rho)),
            _ => autocorr_k(&train.covariates, |rho| adaptive_k(calib_len.max(2), rho)),
        }
    };
    let mut summary = BTreeMap::new();
    let mut buckets = Vec::new();
    for &method in &cfg.methods {
        let k = match (method, cfg.k_policy) {
            (Method::Split, _) => WindowK::Fixed(1),
            (_, KPolicy::Fixed(k)) => WindowK::Fixed(k),
            _ => WindowK::PerWindow(&estimated),
        };
        let steps = rolling_cp_fitted(&data, cfg.train_len, cfg.calib_len, cfg.alpha, k, method.rule(), fit_ar_lenient)?;
        let hits = steps.iter().filter(|s| s.covered).count();
        let (coverage_mean, coverage_se) = binomial(hits, steps.len());
        let finite: Vec<f64> = steps.iter().map(|s| s.q_hat).filter(|q| q.is_finite()).collect();
        let mut ks: Vec<usize> = steps.iter().map(|s| s.k).collect();
        ks.sort_unstable();
        summary.insert(
            method,
            RollingSummary {
                coverage_mean,
                coverage_se,
                mean_halfwidth: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
                k_median: ks[(ks.len() - 1) / 2],
                k_min: ks[0],
                k_max: ks[ks.len() - 1],
                steps: steps.len(),
                infinite_intervals: steps.len() - finite.len(),
                all_infinite: finite.is_empty(),
            },
        );
        for (bucket, chunk) in steps.chunks(cfg.bucket_len).enumerate() {
            buckets.push(BucketCoverage {
                method,
                bucket,
                first_index: chunk[0].index,
                steps: chunk.len(),
                coverage: chunk.iter().filter(|s| s.covered).count() as f64 / chunk.len() as f64,
            });
        }
    }
    Ok(RollingReport { summary, buckets })
}
