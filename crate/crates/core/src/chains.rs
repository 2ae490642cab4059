//! Finite and AR(1) Markov chains: construction, simulation, and exact
//! mixing diagnostics.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetric_eigenvalues, SquareMatrix};
use crate::rng::{seeded_rng, SimRng};

/// Tolerance on row sums and probability-vector sums.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;
/// Tolerance on detailed balance `π_i P_ij = π_j P_ji`.
pub const REVERSIBILITY_TOLERANCE: f64 = 1e-10;
/// Hard cap on the mixing-time search.
pub const MIXING_TIME_CAP: usize = 1_000_000;
const MAX_SQUARINGS: usize = 64;

/// Row-stochastic transition matrix over states `0..size`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteKernel {
    matrix: SquareMatrix,
}

impl FiniteKernel {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(SquareMatrix::from_rows(rows)?)
    }

    pub fn from_matrix(matrix: SquareMatrix) -> Result<Self> {
        for i in 0..matrix.dim() {
            let row = matrix.row(i);
            if let Some(j) = row.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid(format!("entry ({i}, {j}) = {} is not a probability", row[j])));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn identity(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("kernel needs at least one state"));
        }
        Ok(Self { matrix: SquareMatrix::identity(size) })
    }

    /// Kernel whose every row equals `pi`: the chain mixes in one step.
    pub fn independent(pi: &Distribution) -> Self {
        let n = pi.len();
        let data = (0..n).flat_map(|_| pi.as_slice().iter().copied()).collect();
        Self { matrix: SquareMatrix::from_row_major(n, data).expect("square by construction") }
    }

    /// Lazy random walk on the cycle `Z/wZ`: stay with probability 1/2,
    /// step to either neighbour with probability 1/4.
    pub fn lazy_walk(w: usize) -> Result<Self> {
        if w < 3 {
            return Err(invalid(format!("lazy walk needs w >= 3, got {w}")));
        }
        let mut m = SquareMatrix::zeros(w);
        for x in 0..w {
            m.set(x, x, 0.5);
            m.set(x, (x + 1) % w, 0.25);
            m.set(x, (x + w - 1) % w, 0.25);
        }
        Ok(Self { matrix: m })
    }

    pub fn size(&self) -> usize {
        self.matrix.dim()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix.get(from, to)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }
}

/// Probability vector over a finite state space.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("distribution needs at least one state"));
        }
        if let Some(i) = weights.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid(format!("weight {i} = {} is not a probability", weights[i])));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(invalid(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(invalid(format!("state {state} out of range for {n} states")));
        }
        let mut w = vec![0.0; n];
        w[state] = 1.0;
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Gaussian AR(1): `x_{t+1} = theta * x_t + eps`, `eps ~ N(0, omega^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ar1Spec {
    theta: f64,
    omega: f64,
}

impl Ar1Spec {
    pub fn new(theta: f64, omega: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(invalid(format!("theta must lie in [0, 1), got {theta}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(invalid(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { theta, omega })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn stationary_variance(&self) -> f64 {
        self.omega * self.omega / (1.0 - self.theta * self.theta)
    }

    /// Law of `X_t` given `X_0 = x`: returns `(mean, variance)`.
    pub fn marginal(&self, x: f64, t: u32) -> (f64, f64) {
        let mean = self.theta.powi(t as i32) * x;
        let var = self.omega.powi(2) * (1.0 - self.theta.powi(2 * t as i32)) / (1.0 - self.theta.powi(2));
        (mean, var)
    }

    /// Pinsker-based upper bound on the stationary β-mixing coefficient at lag `a`.
    pub fn beta_bound(&self, a: u32) -> f64 {
        self.theta.powi(a as i32) * ((1.0 - self.theta.powi(2)) / (2.0 * self.omega.powi(2))).sqrt()
    }
}

/// Free-function form of [`Ar1Spec::marginal`].
pub fn ar1_marginal(spec: &Ar1Spec, x: f64, t: u32) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(invalid("t must be at least 1"));
    }
    Ok(spec.marginal(x, t))
}

/// Free-function form of [`Ar1Spec::beta_bound`].
pub fn ar1_beta_bound(spec: &Ar1Spec, a: u32) -> Result<f64> {
    if a == 0 {
        return Err(invalid("lag must be at least 1"));
    }
    Ok(spec.beta_bound(a))
}

/// One realization of a chain: covariates, responses, and the time index of
/// the first observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub covariates: Vec<f64>,
    pub responses: Vec<f64>,
    pub origin_time: i64,
}

impl Trajectory {
    pub fn new(covariates: Vec<f64>, responses: Vec<f64>, origin_time: i64) -> Result<Self> {
        if covariates.len() != responses.len() {
            return Err(invalid(format!(
                "covariates ({}) and responses ({}) differ in length",
                covariates.len(),
                responses.len()
            )));
        }
        Ok(Self { covariates, responses, origin_time })
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// Observations `range` (positions, not times) as a new trajectory.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Trajectory {
        Trajectory {
            covariates: self.covariates[range.clone()].to_vec(),
            responses: self.responses[range.clone()].to_vec(),
            origin_time: self.origin_time + range.start as i64,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.covariates.iter().copied().zip(self.responses.iter().copied())
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Simulate `length` states: the first drawn from `init`, each next one from
/// the current state's row.
pub fn simulate_finite(kernel: &FiniteKernel, init: &Distribution, length: usize, seed: u64) -> Result<Vec<usize>> {
    simulate_finite_with(kernel, init, length, &mut seeded_rng(seed))
}

pub fn simulate_finite_with(
    kernel: &FiniteKernel,
    init: &Distribution,
    length: usize,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    if init.len() != kernel.size() {
        return Err(invalid(format!(
            "initial distribution has {} states, kernel has {}",
            init.len(),
            kernel.size()
        )));
    }
    if length == 0 {
        return Err(invalid("length must be positive"));
    }
    let mut states = Vec::with_capacity(length);
    let mut s = sample_index(init.as_slice(), rng);
    states.push(s);
    for _ in 1..length {
        s = sample_index(kernel.row(s), rng);
        states.push(s);
    }
    Ok(states)
}

/// Simulate an AR(1) path of `length` values starting at `x0`.
pub fn simulate_ar1(spec: &Ar1Spec, x0: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_ar1_with(spec, x0, length, &mut seeded_rng(seed))
}

pub fn simulate_ar1_with(spec: &Ar1Spec, x0: f64, length: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(invalid("length must be positive"));
    }
    let mut xs = Vec::with_capacity(length);
    let mut x = x0;
    xs.push(x);
    for _ in 1..length {
        let eps: f64 = StandardNormal.sample(rng);
        x = spec.theta * x + spec.omega * eps;
        xs.push(x);
    }
    Ok(xs)
}

/// Stationary distribution by repeated squaring of the kernel until all rows
/// of `P^(2^k)` agree to [`STOCHASTIC_TOLERANCE`].
pub fn stationary_distribution(kernel: &FiniteKernel) -> Result<Distribution> {
    let n = kernel.size();
    let mut m = kernel.matrix().clone();
    for _ in 0..=MAX_SQUARINGS {
        let spread = (1..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (m.get(i, j) - m.get(0, j)).abs())
            .fold(0.0f64, f64::max);
        if spread < STOCHASTIC_TOLERANCE {
            let row = m.row(0);
            let total: f64 = row.iter().sum();
            return Distribution::new(row.iter().map(|p| (p / total).clamp(0.0, 1.0)).collect());
        }
        m = m.matmul(&m);
    }
    Err(Error::NotErgodic(format!(
        "rows of P^(2^k) did not agree after {MAX_SQUARINGS} squarings"
    )))
}

/// Total-variation distance between two probability vectors.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", p.len(), q.len())));
    }
    Ok(tv_slices(p.as_slice(), q.as_slice()))
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Smallest `t >= 1` with `max_z TV(P^t(z, .), pi) <= eps`.
pub fn mixing_time(kernel: &FiniteKernel, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let pi = stationary_distribution(kernel)?;
    let n = kernel.size();
    let p = kernel.matrix();
    let mut power = p.clone();
    for t in 1..=MIXING_TIME_CAP {
        let worst = (0..n).map(|z| tv_slices(power.row(z), pi.as_slice())).fold(0.0f64, f64::max);
        if worst <= eps {
            return Ok(t);
        }
        power = power.matmul(p);
    }
    Err(Error::NotErgodic(format!("mixing time exceeds {MIXING_TIME_CAP}")))
}

/// Spectrum summary of a reversible kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralGap {
    /// Second-largest eigenvalue.
    pub lambda2: f64,
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    /// `max(lambda2, |lambda_min|)`.
    pub rho: f64,
}

impl SpectralGap {
    pub fn absolute_gap(&self) -> f64 {
        1.0 - self.rho
    }
}

/// Symmetrization `½(L + Lᵀ)` of `L = D^{1/2} P D^{-1/2}` with `D = diag(pi)`.
/// For a kernel reversible with respect to `pi`, `L` is already symmetric.
pub(crate) fn symmetrize(p: &SquareMatrix, pi: &[f64]) -> SquareMatrix {
    let n = p.dim();
    let sqrt_pi: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let mut l = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            l.set(i, j, sqrt_pi[i] * p.get(i, j) / sqrt_pi[j]);
        }
    }
    let lt = l.transpose();
    let mut s = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            s.set(i, j, 0.5 * (l.get(i, j) + lt.get(i, j)));
        }
    }
    s
}

pub(crate) fn spectrum_summary(eigenvalues: &[f64]) -> SpectralGap {
    if eigenvalues.len() < 2 {
        return SpectralGap { lambda2: 0.0, lambda_min: 0.0, rho: 0.0 };
    }
    let lambda2 = eigenvalues[1];
    let lambda_min = *eigenvalues.last().expect("nonempty");
    SpectralGap { lambda2, lambda_min, rho: lambda2.max(lambda_min.abs()) }
}

/// Exact spectrum of a kernel reversible with respect to `pi`.
pub fn spectral_gap_exact(kernel: &FiniteKernel, pi: &Distribution) -> Result<SpectralGap> {
    let n = kernel.size();
    if pi.len() != n {
        return Err(invalid(format!("pi has {} states, kernel has {n}", pi.len())));
    }
    let w = pi.as_slice();
    if w.iter().any(|&v| v <= 0.0) {
        return Err(invalid("pi must be strictly positive"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let violation = (w[i] * kernel.prob(i, j) - w[j] * kernel.prob(j, i)).abs();
            if violation > REVERSIBILITY_TOLERANCE {
                return Err(Error::NotReversible { i, j, violation });
            }
        }
    }
    let eig = symmetric_eigenvalues(&symmetrize(kernel.matrix(), w))?;
    Ok(spectrum_summary(&eig))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lazy_walk_rows() {
        let k = FiniteKernel::lazy_walk(3).unwrap();
        assert_eq!(k.row(0), &[0.5, 0.25, 0.25]);
        let k = FiniteKernel::lazy_walk(20).unwrap();
        for i in 0..20 {
            assert!((k.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(FiniteKernel::lazy_walk(2), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn kernel_validation() {
        assert!(FiniteKernel::new(&[vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::new(&[vec![-0.1, 1.1], vec![0.5, 0.5]]).is_err());
        assert!(Distribution::new(vec![0.3, 0.3]).is_err());
    }

    #[test]
    fn absorbing_chain_stays_put() {
        let k = FiniteKernel::identity(4).unwrap();
        let init = Distribution::point_mass(4, 2).unwrap();
        assert_eq!(simulate_finite(&k, &init, 5, 7).unwrap(), vec![2, 2, 2, 2, 2]);
    }

    #[test]
    fn simulation_is_deterministic_in_seed() {
        let k = FiniteKernel::lazy_walk(6).unwrap();
        let init = Distribution::uniform(6).unwrap();
        let a = simulate_finite(&k, &init, 200, 11).unwrap();
        let b = simulate_finite(&k, &init, 200, 11).unwrap();
        let c = simulate_finite(&k, &init, 200, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let spec = Ar1Spec::new(0.5, 1.0).unwrap();
        assert_eq!(simulate_ar1(&spec, 0.0, 50, 3).unwrap(), simulate_ar1(&spec, 0.0, 50, 3).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let k = FiniteKernel::lazy_walk(4).unwrap();
        let init = Distribution::uniform(3).unwrap();
        assert!(simulate_finite(&k, &init, 10, 0).is_err());
        assert!(tv_distance(&init, &Distribution::uniform(4).unwrap()).is_err());
    }

    #[test]
    fn lazy_walk_long_run_frequencies() {
        let k = FiniteKernel::lazy_walk(4).unwrap();
        let init = Distribution::uniform(4).unwrap();
        let s = simulate_finite(&k, &init, 100_000, 2024).unwrap();
        let mut counts = [0usize; 4];
        for x in s {
            counts[x] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn ar1_theta_zero_forgets_start() {
        let spec = Ar1Spec::new(0.0, 1.0).unwrap();
        let a = simulate_ar1(&spec, 5.0, 10, 9).unwrap();
        let b = simulate_ar1(&spec, -100.0, 10, 9).unwrap();
        assert_eq!(a[0], 5.0);
        assert_eq!(&a[1..], &b[1..]);
    }

    #[test]
    fn ar1_stationary_variance() {
        let spec = Ar1Spec::new(0.9, 1.0).unwrap();
        let x0 = 0.0;
        let xs = simulate_ar1(&spec, x0, 100_000, 77).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let target = 1.0 / (1.0 - 0.81);
        assert!((var - target).abs() / target < 0.10, "var = {var}");
    }

    #[test]
    fn ar1_spec_validation() {
        assert!(Ar1Spec::new(1.0, 1.0).is_err());
        assert!(Ar1Spec::new(-0.1, 1.0).is_err());
        assert!(Ar1Spec::new(0.5, 0.0).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&FiniteKernel::lazy_walk(10).unwrap()).unwrap();
        for p in pi.as_slice() {
            assert!((p - 0.1).abs() < 1e-12);
        }
        assert!(matches!(
            stationary_distribution(&FiniteKernel::identity(3).unwrap()),
            Err(Error::NotErgodic(_))
        ));
        let k = FiniteKernel::new(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = stationary_distribution(&k).unwrap();
        assert!((pi.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi.as_slice()[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_chain_is_not_ergodic() {
        let k = FiniteKernel::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(stationary_distribution(&k), Err(Error::NotErgodic(_))));
    }

    #[test]
    fn tv_examples() {
        let p = Distribution::new(vec![0.5, 0.5]).unwrap();
        let q = Distribution::new(vec![0.75, 0.25]).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 0.25).abs() < 1e-15);
        let a = Distribution::point_mass(3, 0).unwrap();
        let b = Distribution::point_mass(3, 2).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mixing_time_examples() {
        let pi = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(mixing_time(&FiniteKernel::independent(&pi), 0.25).unwrap(), 1);
        let k = FiniteKernel::lazy_walk(12).unwrap();
        assert!(mixing_time(&k, 0.5).unwrap() <= mixing_time(&k, 0.25).unwrap());
        assert!(mixing_time(&k, 0.0).is_err());
    }

    #[test]
    fn spectral_gap_examples() {
        let k = FiniteKernel::lazy_walk(20).unwrap();
        let pi = Distribution::uniform(20).unwrap();
        let g = spectral_gap_exact(&k, &pi).unwrap();
        let expected = (1.0 + (2.0 * std::f64::consts::PI / 20.0).cos()) / 2.0;
        assert!((g.lambda2 - expected).abs() < 1e-9);
        assert!((g.lambda2 * 100.0).round() / 100.0 == 0.98);
        assert!((g.lambda2 * 100.0).floor() / 100.0 == 0.97);

        let rank_one = FiniteKernel::independent(&Distribution::uniform(5).unwrap());
        let g = spectral_gap_exact(&rank_one, &Distribution::uniform(5).unwrap()).unwrap();
        assert!(g.lambda2.abs() < 1e-12);
    }

    #[test]
    fn non_reversible_kernel_rejected() {
        // a biased cycle has uniform pi but breaks detailed balance
        let k = FiniteKernel::new(&[
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.2, 0.7],
            vec![0.7, 0.1, 0.2],
        ])
        .unwrap();
        let pi = stationary_distribution(&k).unwrap();
        assert!(matches!(spectral_gap_exact(&k, &pi), Err(Error::NotReversible { .. })));
    }

    #[test]
    fn ar1_marginal_examples() {
        let spec = Ar1Spec::new(0.9, 1.0).unwrap();
        let (m, v) = ar1_marginal(&spec, 2.0, 3).unwrap();
        assert!((m - 1.458).abs() < 1e-12);
        assert!((v - (1.0 - 0.9f64.powi(6)) / 0.19).abs() < 1e-12);
        let (m, v) = ar1_marginal(&Ar1Spec::new(0.0, 2.0).unwrap(), 7.0, 1).unwrap();
        assert_eq!((m, v), (0.0, 4.0));
        for t in 1..10 {
            assert_eq!(spec.marginal(0.0, t).0, 0.0);
        }
    }

    #[test]
    fn ar1_beta_bound_examples() {
        let spec = Ar1Spec::new(0.9, 1.0).unwrap();
        assert!((ar1_beta_bound(&spec, 1).unwrap() - 0.9 * (0.19f64 / 2.0).sqrt()).abs() < 1e-15);
        assert!((ar1_beta_bound(&spec, 1).unwrap() - 0.27740).abs() < 1e-5);
        assert_eq!(Ar1Spec::new(0.0, 1.0).unwrap().beta_bound(3), 0.0);
        for a in 1..200 {
            assert!(spec.beta_bound(a + 1) < spec.beta_bound(a));
        }
        assert!(spec.beta_bound(1000) < 1e-40);
    }
}
