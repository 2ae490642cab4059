//! Small dense square matrices and a cyclic Jacobi eigen-solver.
//!
//! State spaces handled here have at most a few hundred states, so plain
//! row-major `Vec<f64>` storage and O(n³) products are adequate.

use crate::error::{invalid, Result};

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("matrix must have at least one row"));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("row {i} has length {}, expected {n}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(invalid(format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, data.len())));
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// Row vector times matrix: `v · M`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }

    fn off_diagonal_norm(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += self.data[i * n + j].powi(2);
                }
            }
        }
        s.sqrt()
    }
}

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, sorted
/// in decreasing order.
///
/// Each rotation annihilates one off-diagonal pair; sweeps repeat until the
/// off-diagonal Frobenius norm drops below [`JACOBI_TOLERANCE`]. Symmetry is
/// checked to `1e-12` relative to the largest entry.
pub fn symmetric_eigenvalues(m: &SquareMatrix) -> Result<Vec<f64>> {
    let n = m.dim();
    let scale = m.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 * scale {
                return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a = m.clone();
    let mut sweeps = 0;
    while a.off_diagonal_norm() > JACOBI_TOLERANCE {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(invalid(format!("Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
        sweeps += 1;
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Apply the Jacobi rotation that zeroes `a[p][q]` (and `a[q][p]`).
fn rotate(a: &mut SquareMatrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    // signum(0.0) == 1.0, so equal diagonals rotate by π/4
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.dim();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
}
