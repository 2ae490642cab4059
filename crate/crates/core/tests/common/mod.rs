//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use markov_cp::theory::{n0, BoundInputs};
use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn mat_mul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            c[i][j] = (0..n).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Solve `π(P − I) = 0`, `Σπ = 1` by Gaussian elimination with partial
/// pivoting; the last balance equation is replaced by the normalization.
pub fn stationary_gauss(p: &Dense) -> Vec<f64> {
    let n = p.len();
    // row i of the system: Σ_j π_j (P_ji − δ_ij) = 0
    let mut a: Dense = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| p[j][i] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// First `t >= 1` at which every row of `P^t` is within `eps` of `π` in TV.
pub fn mixing_time_oracle(p: &Dense, eps: f64) -> usize {
    let pi = stationary_gauss(p);
    let mut power = p.clone();
    for t in 1.. {
        if power.iter().all(|row| tv(row, &pi) <= eps) {
            return t;
        }
        power = mat_mul(&power, p);
    }
    unreachable!()
}

/// Primitive (irreducible and aperiodic) iff `P^((n−1)²+1)` is positive.
pub fn is_ergodic(p: &Dense) -> bool {
    let n = p.len();
    let pattern: Vec<Vec<bool>> = p.iter().map(|r| r.iter().map(|&v| v > 0.0).collect()).collect();
    let mut reach = pattern.clone();
    for _ in 0..(n - 1) * (n - 1) {
        reach = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| reach[i][k] && pattern[k][j])).collect())
            .collect();
    }
    reach.iter().all(|r| r.iter().all(|&b| b))
}

/// Random kernel with about a third of its entries zeroed.
pub fn random_kernel(size: usize, rng: &mut impl Rng) -> Dense {
    (0..size)
        .map(|_| {
            let mut row: Vec<f64> =
                (0..size).map(|_| if rng.random_bool(0.35) { 0.0 } else { rng.random_range(0.01..1.0) }).collect();
            if row.iter().all(|&v| v == 0.0) {
                row[rng.random_range(0..size)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Bound inputs with `n − r ≥ 10·n₀`, where the interior critical point is
/// the global minimizer over `u`; `β(n+1) = β(r)`.
pub fn random_bound_inputs(rng: &mut impl Rng) -> BoundInputs {
    let t_mix = rng.random_range(1..=40);
    let floor = (10.0 * n0(t_mix)).ceil() as usize;
    let n = rng.random_range(floor + 10..=floor + 20_000);
    let r = rng.random_range(1..=(n - floor).min(n / 2).max(1));
    let beta_r = rng.random_range(0.0..0.01);
    BoundInputs {
        n,
        n_train: rng.random_range(100..=10_000),
        r,
        alpha: rng.random_range(0.01..0.3),
        t_mix,
        delta_n_train: rng.random_range(0.0..0.01),
        delta_n_n_train_1: rng.random_range(0.0..0.01),
        beta_r,
        beta_n1: beta_r,
        ..Default::default()
    }
}

/// Coefficients `c` of `det(λI − A) = λⁿ + c[1]λⁿ⁻¹ + … + c[n]` by the
/// Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![1.0; n + 1];
    let mut m: Dense = vec![vec![0.0; n]; n];
    for k in 1..=n {
        for i in 0..n {
            m[i][i] += c[k - 1];
        }
        m = mat_mul(a, &m);
        let trace: f64 = (0..n).map(|i| m[i][i]).sum();
        c[k] = -trace / k as f64;
    }
    c
}

pub fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().fold(0.0, |acc, &ci| acc * x + ci)
}
