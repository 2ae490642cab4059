//! Data-driven estimates of the ergodicity rate and the thinning step.

use crate::chains::{spectrum_summary, symmetrize, Distribution, SpectralGap};
use crate::error::{domain, invalid, Error, Result};
use crate::linalg::{symmetric_eigenvalues, SquareMatrix};

/// Estimated rates are kept inside `[RATE_CLIP, 1 − RATE_CLIP]`.
pub const RATE_CLIP: f64 = 1e-9;
/// Autocorrelations at or below this value are dropped before taking logs.
pub const AUTOCORR_GUARD: f64 = 0.01;

/// Transition counts and their row-normalized kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalKernel {
    /// `counts[i * size + j]` = number of observed `i → j` transitions.
    pub counts: Vec<u64>,
    pub p_hat: SquareMatrix,
    /// Visit frequencies over all but the last state.
    pub pi_hat: Distribution,
    /// Transitions out of each state.
    pub visits: Vec<u64>,
}

impl EmpiricalKernel {
    pub fn size(&self) -> usize {
        self.visits.len()
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.size() + j]
    }
}

pub fn empirical_kernel(states: &[usize], num_states: usize) -> Result<EmpiricalKernel> {
    if num_states == 0 {
        return Err(invalid("num_states must be positive"));
    }
    if states.len() < 2 {
        return Err(Error::InsufficientData("need at least two states to count transitions".into()));
    }
    if let Some(&s) = states.iter().find(|&&s| s >= num_states) {
        return Err(invalid(format!("state {s} out of range for {num_states} states")));
    }
    let n = num_states;
    let mut counts = vec![0u64; n * n];
    let mut visits = vec![0u64; n];
    for w in states.windows(2) {
        counts[w[0] * n + w[1]] += 1;
        visits[w[0]] += 1;
    }
    if let Some(i) = visits.iter().position(|&v| v == 0) {
        return Err(Error::InsufficientData(format!("state {i} has no observed transitions")));
    }
    let data = counts.iter().enumerate().map(|(idx, &c)| c as f64 / visits[idx / n] as f64).collect();
    let p_hat = SquareMatrix::from_row_major(n, data)?;
    let total = (states.len() - 1) as f64;
    let freq: Vec<f64> = visits.iter().map(|&v| v as f64 / total).collect();
    let sum: f64 = freq.iter().sum();
    let pi_hat = Distribution::new(freq.iter().map(|f| f / sum).collect())?;
    Ok(EmpiricalKernel { counts, p_hat, pi_hat, visits })
}

/// Spectrum of the additive symmetrization of `D̂^{1/2} P̂ D̂^{-1/2}`.
pub fn estimate_spectrum(ek: &EmpiricalKernel) -> Result<SpectralGap> {
    let eig = symmetric_eigenvalues(&symmetrize(&ek.p_hat, ek.pi_hat.as_slice()))?;
    Ok(spectrum_summary(&eig))
}

/// `ρ̂ = 1 − γ̂`, the largest non-unit eigenvalue modulus, clipped away from 0 and 1.
pub fn estimate_rho(ek: &EmpiricalKernel) -> Result<f64> {
    Ok(clip_rate(estimate_spectrum(ek)?.rho))
}

fn clip_rate(rho: f64) -> f64 {
    rho.clamp(RATE_CLIP, 1.0 - RATE_CLIP)
}

/// `K̂ = max(1, round(ln n / ln(1/ρ̂)))`.
pub fn adaptive_k(n: usize, rho_hat: f64) -> Result<usize> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    if !(rho_hat > 0.0 && rho_hat < 1.0) {
        return Err(domain(format!("rho_hat must lie in (0, 1), got {rho_hat}")));
    }
    let k = (n as f64).ln() / (1.0 / rho_hat).ln();
    Ok((k.round() as usize).max(1))
}

/// Simple returns `x_{t+1}/x_t − 1`.
pub fn returns(series: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = series.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidData(format!("value {} at position {i} is not strictly positive", series[i])));
    }
    Ok(series.windows(2).map(|w| w[1] / w[0] - 1.0).collect())
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn autocorrelations(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var: f64 = centered.iter().map(|c| c * c).sum();
    (1..=max_lag)
        .map(|h| {
            if var == 0.0 || h >= n {
                return 0.0;
            }
            centered[..n - h].iter().zip(&centered[h..]).map(|(a, b)| a * b).sum::<f64>() / var
        })
        .collect()
}

/// Rate from a log-linear fit of autocorrelations: `acf[h - 1] = ĉ(h)`.
/// Lags with `ĉ(h) ≤ 0.01` are dropped; `ρ̂ = exp(slope)`.
pub fn rho_from_autocorrelations(acf: &[f64]) -> Result<f64> {
    let points: Vec<(f64, f64)> = acf
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > AUTOCORR_GUARD)
        .map(|(i, &c)| ((i + 1) as f64, c.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} lag(s) with autocorrelation above {AUTOCORR_GUARD}, need 2",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let hx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let ly = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|(h, l)| (h - hx) * (l - ly)).sum();
    let sxx: f64 = points.iter().map(|(h, _)| (h - hx).powi(2)).sum();
    Ok(clip_rate((sxy / sxx).exp()))
}

pub fn estimate_rho_autocorr(series: &[f64], max_lag: usize) -> Result<f64> {
    if max_lag < 2 {
        return Err(invalid(format!("max_lag must be at least 2, got {max_lag}")));
    }
    if series.len() <= 4 * max_lag {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for max_lag {max_lag}",
            series.len()
        )));
    }
    rho_from_autocorrelations(&autocorrelations(series, max_lag))
}
