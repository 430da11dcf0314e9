//! Dense eigenvalue routines.
//!
//! The symmetric solver is a cyclic Jacobi iteration: slow in theory, but at
//! the sizes used here (tens of nodes) it converges in a handful of sweeps and
//! delivers eigenvalues to full relative accuracy. Non-symmetric spectra go
//! through nalgebra's real Schur decomposition.

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

pub type Complex64 = nalgebra::Complex<f64>;

/// Symmetry tolerance relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;
const SCHUR_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V·diag(λ)·Vᵀ`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(lambda);
        }
        let out = &scaled * self.vectors.transpose();
        debug_assert_eq!(out.nrows(), n);
        out
    }
}

pub fn max_asymmetry(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a real symmetric matrix.
pub fn symmetric_eigen(mat: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if !mat.is_square() {
        return Err(Error::DimensionMismatch {
            what: "symmetric matrix columns",
            expected: mat.nrows(),
            found: mat.ncols(),
        });
    }
    let n = mat.nrows();
    let scale = mat.amax().max(1.0);
    let asym = max_asymmetry(mat);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = (mat + mat.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let frob2 = a.norm_squared();
    let target = (f64::EPSILON * f64::EPSILON) * frob2;

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_sq(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged && off_diagonal_sq(&a) > target {
        return Err(Error::EigenFailure);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum
}

// A <- Pᵀ A P, V <- V P with P the (p, q) plane rotation [[c, s], [-s, c]].
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Eigenvalues of a general real square matrix, sorted by real part then
/// imaginary part.
pub fn general_eigenvalues(mat: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !mat.is_square() {
        return Err(Error::DimensionMismatch {
            what: "square matrix columns",
            expected: mat.nrows(),
            found: mat.ncols(),
        });
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let schur = Schur::try_new(mat.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::EigenFailure)?;
    let mut values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut values);
    Ok(values)
}

pub fn sort_complex(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}
