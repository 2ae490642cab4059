//! Coverage-gap and quantile-deviation calculators for split and K-split
//! conformal prediction on Markov chains.
//!
//! Every calculator is a closed-form expression in quantities the caller
//! supplies through [`BoundInputs`]: sample sizes, a mixing time, a
//! geometric rate, total-variation distances to stationarity and β-mixing
//! coefficients. Ergodicity constants are never estimated here; callers pass
//! surrogates. Regimes where a bound is vacuous or undefined return
//! [`Error::DomainError`](crate::Error::DomainError) instead of a clamped value.

mod lambert;

pub use lambert::{lambert_w0, lambert_wm1, BRANCH_POINT};

use crate::conformal::ceil_tol;
use crate::error::{domain, invalid, Result};

/// Parameter bundle shared by the bound calculators.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// Calibration size `n`.
    pub n: usize,
    /// Training size `N`.
    pub n_train: usize,
    /// Separation between training and calibration (steps).
    pub r: usize,
    /// Thinning step.
    pub k: usize,
    pub alpha: f64,
    /// Mixing time `t_mix = τ(1/4)`.
    pub t_mix: usize,
    /// Geometric ergodicity rate in `(0, 1)`.
    pub rho: f64,
    /// `delta1[a - 1] = ‖ν₁Pᵃ − π‖_TV` for `a = 1, 2, …`. Empty means
    /// identically zero (restart from stationarity).
    pub delta1: Vec<f64>,
    /// `δ(N) = ‖ν₀Pᴺ − π‖_TV`.
    pub delta_n_train: f64,
    /// `δ(n + N + 1)`.
    pub delta_n_n_train_1: f64,
    /// `β(r)`.
    pub beta_r: f64,
    /// `β(K)` for a stationary start.
    pub beta_k: f64,
    /// Non-stationary surrogate `β′(K)`.
    pub beta_prime_k: f64,
    /// `β(n + 1)`; enters only [`gamma_optimal_r`]. Zero by default.
    pub beta_n1: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            n: 1000,
            n_train: 1000,
            r: 1,
            k: 1,
            alpha: 0.1,
            t_mix: 1,
            rho: 0.5,
            delta1: Vec::new(),
            delta_n_train: 0.0,
            delta_n_n_train_1: 0.0,
            beta_r: 0.0,
            beta_k: 0.0,
            beta_prime_k: 0.0,
            beta_n1: 0.0,
        }
    }
}

impl BoundInputs {
    /// `δ₁(a)`, zero when the sequence is empty.
    pub fn delta1_at(&self, a: usize) -> Result<f64> {
        if self.delta1.is_empty() {
            return Ok(0.0);
        }
        self.delta1
            .get(a.wrapping_sub(1))
            .copied()
            .ok_or_else(|| invalid(format!("delta1 has {} entries, need index {a}", self.delta1.len())))
    }

    /// `(1/n) Σ_{a=1..n} δ₁(a)`.
    pub fn delta1_mean(&self) -> Result<f64> {
        self.thinned_delta1_mean(1)
    }

    /// `(K/n) Σ_{a=1..⌊n/K⌋} δ₁(K·a)`.
    fn thinned_delta1_mean(&self, k: usize) -> Result<f64> {
        let mut sum = 0.0;
        for a in 1..=self.n / k {
            sum += self.delta1_at(k * a)?;
        }
        Ok(sum * k as f64 / self.n as f64)
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.t_mix == 0 {
            return Err(invalid("t_mix must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let probs = [
            self.delta_n_train,
            self.delta_n_n_train_1,
            self.beta_r,
            self.beta_k,
            self.beta_prime_k,
            self.beta_n1,
        ];
        if probs.iter().chain(&self.delta1).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("TV distances and beta coefficients must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A coverage-gap value with the arguments that achieve it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapBound {
    pub value: f64,
    pub arg_u: f64,
    pub arg_r: usize,
}

/// Coverage gap `γ(u)` of split CP when calibration restarts from `ν₁`.
pub fn gamma_restart(u: f64, b: &BoundInputs) -> Result<f64> {
    b.check()?;
    let mean = b.delta1_mean()?;
    if u.is_nan() || u <= mean {
        return Err(domain(format!("u = {u} must exceed the mean TV distance {mean}")));
    }
    let n = b.n as f64;
    let exponent = -(2.0 * n / (9.0 * b.t_mix as f64)) * (u - mean).powi(2);
    Ok(u + exponent.exp() + b.delta1_at(b.n + 1)?)
}

/// Coverage gap `γ(u, r)` of split CP on a single trajectory with an
/// `r`-step separation. `b.beta_r` must hold `β(r)`.
pub fn gamma_norestart(u: f64, r: usize, b: &BoundInputs) -> Result<f64> {
    b.check()?;
    if u.is_nan() || u <= b.delta_n_train {
        return Err(domain(format!("u = {u} must exceed delta(N) = {}", b.delta_n_train)));
    }
    if r == 0 || r > b.n {
        return Err(domain(format!("r = {r} must lie in [1, n = {}]", b.n)));
    }
    let n = b.n as f64;
    let a = 2.0 * (n - r as f64) / (9.0 * b.t_mix as f64);
    Ok(u + (-a * (u - b.delta_n_train).powi(2)).exp()
        + b.delta_n_n_train_1
        + 2.0 * b.beta_r
        + (1.0 + b.alpha * r as f64) / (n + 1.0))
}

/// `n₀ = (9/4)·t_mix`.
pub fn n0(t_mix: usize) -> f64 {
    2.25 * t_mix as f64
}

/// `γ(u, r)` minimized over `u` at `r = b.r`.
///
/// The minimizer is the larger critical point
/// `u₂ = sqrt(−W₋₁(−n₀/(n−r)) · n₀/(n−r)) + δ(N)`. The returned value carries
/// `β(n+1) + β(r)` where [`gamma_norestart`] carries `2β(r)`; the two agree
/// when `b.beta_n1 == b.beta_r`. `u₂` is a local minimum; it is the global one
/// on `u > δ(N)` once `n − r` is a few multiples of `e·n₀`.
pub fn gamma_optimal_r(b: &BoundInputs) -> Result<GapBound> {
    b.check()?;
    if b.r == 0 || b.r >= b.n {
        return Err(domain(format!("r = {} must lie in [1, n)", b.r)));
    }
    let effective = (b.n - b.r) as f64;
    let ratio = n0(b.t_mix) / effective;
    if -ratio < BRANCH_POINT {
        return Err(domain(format!(
            "n - r = {effective} is below e*n0 = {}: no interior optimum",
            std::f64::consts::E * n0(b.t_mix)
        )));
    }
    let w = lambert_wm1(-ratio)?;
    let offset = (-w * ratio).sqrt();
    let value = offset
        + (0.5 * w).exp()
        + (1.0 + b.r as f64 * b.alpha) / (b.n as f64 + 1.0)
        + b.delta_n_train
        + b.delta_n_n_train_1
        + b.beta_n1
        + b.beta_r;
    Ok(GapBound { value, arg_u: offset + b.delta_n_train, arg_r: b.r })
}

/// Optimal thinning step `K* = W₀(n²(ln ρ)²) / ln(1/ρ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KStar {
    /// Unrounded `K*`.
    pub value: f64,
    /// `max(1, round(K*))`.
    pub rounded: usize,
}

pub fn k_star(n: usize, rho: f64) -> Result<KStar> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(domain(format!("rho must lie in (0, 1), got {rho}")));
    }
    let log_rho = rho.ln();
    let nf = n as f64;
    let value = lambert_w0(nf * nf * log_rho * log_rho)? / -log_rho;
    Ok(KStar { value, rounded: (value.round() as usize).max(1) })
}

/// Interval `(low, high)` such that K-split coverage lies in
/// `[1 − α − low, 1 − α + high]`.
///
/// `separation = None` is the restart scenario; `Some(r)` uses a single
/// trajectory with an `r`-step gap (and `b.beta_r = β(r)`). `stationary`
/// selects `b.beta_k` over the surrogate `b.beta_prime_k`.
pub fn ksplit_gap(n: usize, k: usize, separation: Option<usize>, b: &BoundInputs, stationary: bool) -> Result<(f64, f64)> {
    b.check()?;
    let beta = if stationary { b.beta_k } else { b.beta_prime_k };
    let r = separation.unwrap_or(0);
    if n == 0 || r >= n || k == 0 || k > n - r {
        return Err(invalid(format!("need 1 <= K <= n - r, got K = {k}, n = {n}, r = {r}")));
    }
    let effective = (n - r) as f64;
    let kf = k as f64;
    match separation {
        None => {
            let gamma = 2.0 * (effective / kf) * beta;
            Ok((gamma, gamma + kf / effective))
        }
        Some(r) => {
            let gamma = (1.0 + b.alpha * r as f64) / (n as f64 + 1.0) + 2.0 * (effective / kf) * beta + b.beta_r;
            Ok((gamma, gamma + kf / effective))
        }
    }
}

/// Whether calibration restarts independently of training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Restart,
    NoRestart,
}

/// High-probability bound on `|q̂ − q|`: `u*` and `u*/κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileDeviation {
    pub u_star: f64,
    pub deviation: f64,
}

/// Model-side constants: density floor `κ`, sup-norm accuracy `c_N` holding
/// with probability `1 − d_N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelAccuracy {
    pub kappa: f64,
    pub c_n: f64,
    pub d_n: f64,
}

struct Effective {
    n: f64,
    t_mix: f64,
    delta1_mean: f64,
    /// `α ln(n)/(n ln(1/ρ))` after substitution.
    rate_term: f64,
}

fn deviation_from(eff: Effective, b: &BoundInputs, acc: ModelAccuracy, delta_conf: f64, scenario: Scenario) -> Result<QuantileDeviation> {
    if !(delta_conf > 0.0 && delta_conf < 1.0) {
        return Err(domain(format!("confidence delta must lie in (0, 1), got {delta_conf}")));
    }
    if acc.kappa.is_nan() || acc.kappa <= 0.0 {
        return Err(invalid(format!("kappa must be positive, got {}", acc.kappa)));
    }
    let concentration = (9.0 * eff.t_mix * (2.0 / delta_conf).ln() / (2.0 * eff.n)).sqrt();
    let base = acc.d_n + 2.0 * acc.kappa * acc.c_n + concentration;
    let u_star = match scenario {
        Scenario::Restart => base + eff.delta1_mean,
        Scenario::NoRestart => base + b.delta_n_train + eff.rate_term,
    };
    Ok(QuantileDeviation { u_star, deviation: u_star / acc.kappa })
}

fn check_rho(b: &BoundInputs, scenario: Scenario) -> Result<()> {
    if scenario == Scenario::NoRestart && !(b.rho > 0.0 && b.rho < 1.0) {
        return Err(domain(format!("rho must lie in (0, 1), got {}", b.rho)));
    }
    Ok(())
}

/// Quantile-deviation bound for split CP.
pub fn quantile_deviation_bound(b: &BoundInputs, acc: ModelAccuracy, delta_conf: f64, scenario: Scenario) -> Result<QuantileDeviation> {
    b.check()?;
    check_rho(b, scenario)?;
    let n = b.n as f64;
    let eff = Effective {
        n,
        t_mix: b.t_mix as f64,
        delta1_mean: if scenario == Scenario::Restart { b.delta1_mean()? } else { 0.0 },
        rate_term: b.alpha * n.ln() / (n * (1.0 / b.rho).ln()),
    };
    deviation_from(eff, b, acc, delta_conf, scenario)
}

/// Quantile-deviation bound for K-split CP with `K = b.k`: `n ↦ n/K`,
/// `t_mix ↦ ⌈t_mix/K⌉`, the δ₁ average taken over multiples of `K`, and
/// `ρ ↦ ρᴷ`.
pub fn ksplit_quantile_bound(b: &BoundInputs, acc: ModelAccuracy, delta_conf: f64, scenario: Scenario) -> Result<QuantileDeviation> {
    b.check()?;
    check_rho(b, scenario)?;
    if b.k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    let k = b.k as f64;
    let n = b.n as f64 / k;
    let eff = Effective {
        n,
        t_mix: b.t_mix.div_ceil(b.k) as f64,
        delta1_mean: if scenario == Scenario::Restart { b.thinned_delta1_mean(b.k)? } else { 0.0 },
        rate_term: b.alpha * n.ln() / (n * k * (1.0 / b.rho).ln()),
    };
    deviation_from(eff, b, acc, delta_conf, scenario)
}

/// Finite-sample coverage band of split CP on `m` exchangeable calibration
/// points: `(⌈(m+1)(1−α)⌉/(m+1), 1 − α + 1/(m+1))`.
pub fn iid_coverage_bounds(m: usize, alpha: f64) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(invalid("m must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let slots = m as f64 + 1.0;
    let low = (ceil_tol(slots * (1.0 - alpha)) / slots).min(1.0);
    Ok((low, 1.0 - alpha + 1.0 / slots))
}

/// Upper bound on the geometric rate from the mixing time, or `1 − gap` for
/// a reversible chain with known absolute spectral gap.
pub fn rho_from_tmix(t_mix: usize, reversible: bool, gap: Option<f64>) -> Result<f64> {
    if t_mix == 0 {
        return Err(invalid("t_mix must be positive"));
    }
    if reversible {
        let gap = gap.ok_or_else(|| invalid("reversible mode needs a spectral gap"))?;
        if !(gap > 0.0 && gap <= 1.0) {
            return Err(invalid(format!("gap must lie in (0, 1], got {gap}")));
        }
        Ok(1.0 - gap)
    } else {
        Ok((1.0 - 1.0 / (2.0 * t_mix as f64)).sqrt())
    }
}
