//! Inertia and eigenvalue checks of the closed-loop error system, plus the
//! feasibility test and ultimate bound for time-varying disturbances.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::GraphMatrices;
use crate::linalg::{self, general_eigenvalues, Complex64};

pub use crate::linalg::{symmetric_eigen, SymmetricEigen};

/// An eigenvalue counts as zero when `|Re λ| < INERTIA_TOL · max(1, ρ)`.
pub const INERTIA_TOL: f64 = 1e-9;

/// Grid of `μ` values tried by [`best_mu`].
pub const MU_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Bound reported is this factor times the strict lower limit.
pub const BOUND_MARGIN: f64 = 1.001;

#[derive(Debug, Clone, PartialEq)]
pub struct InertiaReport {
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_zero: usize,
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex64>,
}

impl InertiaReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<Complex64>) -> Self {
        linalg::sort_complex(&mut eigenvalues);
        let radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = INERTIA_TOL * radius.max(1.0);
        let (mut n_positive, mut n_negative, mut n_zero) = (0, 0, 0);
        for z in &eigenvalues {
            if z.re.abs() < tol {
                n_zero += 1;
            } else if z.re > 0.0 {
                n_positive += 1;
            } else {
                n_negative += 1;
            }
        }
        InertiaReport {
            n_positive,
            n_negative,
            n_zero,
            eigenvalues,
        }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::from_eigenvalues(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `(π₊, π₋, π₀)`
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.n_positive, self.n_negative, self.n_zero)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.n_negative == self.dimension()
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl fmt::Display for InertiaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "  inertia (pi+, pi-, pi0) = ({}, {}, {})",
            self.n_positive, self.n_negative, self.n_zero
        )?;
        write!(f, "  eigenvalues:")?;
        for z in &self.eigenvalues {
            if z.im == 0.0 {
                write!(f, " {:.6}", z.re)?;
            } else {
                write!(f, " {:.6}{:+.6}i", z.re, z.im)?;
            }
        }
        writeln!(f)
    }
}

fn check_gains(k: &[f64], n: usize) -> Result<()> {
    if k.len() != n {
        return Err(Error::DimensionMismatch {
            what: "gain vector",
            expected: n,
            found: k.len(),
        });
    }
    match k.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        Some(i) => Err(Error::NonPositiveGain(i)),
        None => Ok(()),
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {v}"),
        })
    }
}

/// Spectrum of `K·Q` through the symmetric similarity `C·L·C`,
/// `C = (K·S)^{1/2}`, so every eigenvalue is real by construction.
pub fn inertia_of_kq(k: &[f64], gm: &GraphMatrices) -> Result<InertiaReport> {
    let n = gm.n();
    check_gains(k, n)?;
    let c: Vec<f64> = (0..n).map(|i| (k[i] * gm.scaling[(i, i)]).sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| c[i] * gm.laplacian[(i, j)] * c[j]);
    let eig = symmetric_eigen(&sym)?;
    Ok(InertiaReport::from_real(&eig.values))
}

/// Eigenvalues of `K·Q` computed directly from the non-symmetric product.
pub fn kq_direct_eigenvalues(k: &[f64], gm: &GraphMatrices) -> Result<Vec<Complex64>> {
    check_gains(k, gm.n())?;
    let kq = DMatrix::from_diagonal(&DVector::from_column_slice(k)) * &gm.localized_projection;
    general_eigenvalues(&kq)
}

/// `[[−L − m·I, −I], [K·(Q + q·I), 0]]`
pub fn error_system_matrix(gm: &GraphMatrices, k: &[f64], m: f64, q: f64) -> Result<DMatrix<f64>> {
    let n = gm.n();
    check_gains(k, n)?;
    check_positive("m", m)?;
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: format!("must be non-negative, got {q}"),
        });
    }
    let mut a0 = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            a0[(i, j)] = -gm.laplacian[(i, j)];
            a0[(n + i, j)] = k[i] * gm.localized_projection[(i, j)];
        }
        a0[(i, i)] -= m;
        a0[(i, n + i)] = -1.0;
        a0[(n + i, i)] += k[i] * q;
    }
    Ok(a0)
}

/// `[1ᵀ, −m·1ᵀ]ᵀ`, the null direction of the `q = 0` error matrix.
pub fn consensus_null_vector(n: usize, m: f64) -> DVector<f64> {
    DVector::from_fn(2 * n, |i, _| if i < n { 1.0 } else { -m })
}

pub fn classify_error_system(mat: &DMatrix<f64>) -> Result<InertiaReport> {
    if !mat.is_square() || !mat.nrows().is_multiple_of(2) || mat.nrows() == 0 {
        return Err(Error::NotEvenSquare {
            rows: mat.nrows(),
            cols: mat.ncols(),
        });
    }
    Ok(InertiaReport::from_eigenvalues(general_eigenvalues(mat)?))
}

/// Spectrum of `Ã = −L − m·I`; `Ã` is symmetric, so this is `{−λ_i(L) − m}`.
pub fn check_hurwitz_atilde(gm: &GraphMatrices, m: f64) -> Result<InertiaReport> {
    check_positive("m", m)?;
    let n = gm.n();
    let a = -(&gm.laplacian) - DMatrix::<f64>::identity(n, n) * m;
    Ok(InertiaReport::from_real(&symmetric_eigen(&a)?.values))
}

/// Result of the feasibility test for a given `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub mu: f64,
    pub m: f64,
    pub kappa: f64,
    /// `λ_min(R)`, `R = 2L + (2m − 1/μ)·I`
    pub r_min_eig: f64,
    /// `λ_min(R̄)`, `R̄ = κ·I − K⁻¹ − μ·Q̄·Q̄ᵀ`
    pub rbar_min_eig: f64,
    pub lambda_max_kinv: f64,
    pub feasible: bool,
}

pub fn check_gain_condition(gm: &GraphMatrices, k: &[f64], m: f64, kappa: f64, mu: f64) -> Result<AssumptionReport> {
    let n = gm.n();
    check_gains(k, n)?;
    check_positive("m", m)?;
    check_positive("mu", mu)?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: format!("must be non-negative, got {kappa}"),
        });
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let r = &gm.laplacian * 2.0 + &identity * (2.0 * m - 1.0 / mu);
    let qbar = gm.complement_projection();
    let kinv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / k[i] } else { 0.0 });
    let rbar = &identity * kappa - &kinv - (&qbar * qbar.transpose()) * mu;

    let r_eig = symmetric_eigen(&r)?;
    let rbar_eig = symmetric_eigen(&rbar)?;
    let positive = |e: &SymmetricEigen| {
        let radius = e.min().abs().max(e.max().abs());
        e.min() > INERTIA_TOL * radius.max(1.0)
    };
    Ok(AssumptionReport {
        mu,
        m,
        kappa,
        r_min_eig: r_eig.min(),
        rbar_min_eig: rbar_eig.min(),
        lambda_max_kinv: k.iter().map(|v| 1.0 / v).fold(0.0, f64::max),
        feasible: positive(&r_eig) && positive(&rbar_eig),
    })
}

/// Tries every `μ` in [`MU_GRID`]; prefers feasible results, then the
/// largest `λ_min(R̄)`.
pub fn best_mu(gm: &GraphMatrices, k: &[f64], m: f64, kappa: f64) -> Result<AssumptionReport> {
    let mut best: Option<AssumptionReport> = None;
    for mu in MU_GRID {
        let rep = check_gain_condition(gm, k, m, kappa, mu)?;
        let better = match &best {
            None => true,
            Some(b) => (rep.feasible, rep.rbar_min_eig) > (b.feasible, b.rbar_min_eig),
        };
        if better {
            best = Some(rep);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub assumption: AssumptionReport,
    pub w_star: f64,
    pub wdot_star: f64,
    /// `κ·w*² + λ_max(K⁻¹)·ẇ*²`
    pub c: f64,
    pub nu_x: f64,
    pub nu_w: f64,
    /// `(ν_x² + λ_max(K⁻¹)·ν_w²)^{1/2}`; the bound must exceed this.
    pub bound_floor: f64,
    pub epsilon_bound: f64,
}

pub fn ultimate_bound(assumption: &AssumptionReport, w_star: f64, wdot_star: f64) -> Result<BoundReport> {
    if !assumption.feasible {
        return Err(Error::AssumptionInfeasible {
            r_min: assumption.r_min_eig,
            rbar_min: assumption.rbar_min_eig,
        });
    }
    for (name, v) in [("w_star", w_star), ("wdot_star", wdot_star)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be non-negative, got {v}"),
            });
        }
    }
    let lk = assumption.lambda_max_kinv;
    let c = assumption.kappa * w_star * w_star + lk * wdot_star * wdot_star;
    let nu_x = (c / assumption.r_min_eig).sqrt();
    let nu_w = (c / assumption.rbar_min_eig).sqrt();
    let bound_floor = (nu_x * nu_x + lk * nu_w * nu_w).sqrt();
    Ok(BoundReport {
        assumption: assumption.clone(),
        w_star,
        wdot_star,
        c,
        nu_x,
        nu_w,
        bound_floor,
        epsilon_bound: BOUND_MARGIN * bound_floor,
    })
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  mu                : {}", self.mu)?;
        writeln!(f, "  lambda_min(R)     : {:.9e}", self.r_min_eig)?;
        writeln!(f, "  lambda_min(R_bar) : {:.9e}", self.rbar_min_eig)?;
        writeln!(f, "  lambda_max(K^-1)  : {:.9e}", self.lambda_max_kinv)?;
        writeln!(f, "  feasible          : {}", self.feasible)
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.assumption)?;
        writeln!(f, "  w_star            : {:.9e}", self.w_star)?;
        writeln!(f, "  wdot_star         : {:.9e}", self.wdot_star)?;
        writeln!(f, "  c                 : {:.9e}", self.c)?;
        writeln!(f, "  nu_x              : {:.9e}", self.nu_x)?;
        writeln!(f, "  nu_w              : {:.9e}", self.nu_w)?;
        writeln!(f, "  bound_floor       : {:.9e}", self.bound_floor)?;
        writeln!(f, "  epsilon_bound     : {:.9e}", self.epsilon_bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn gm(g: Graph) -> GraphMatrices {
        GraphMatrices::new(&g).unwrap()
    }

    fn reals(r: &InertiaReport) -> Vec<f64> {
        r.eigenvalues.iter().map(|z| z.re).collect()
    }

    #[test]
    fn kq_on_path2() {
        let r = inertia_of_kq(&[1.0, 1.0], &gm(Graph::path(2).unwrap())).unwrap();
        let ev = reals(&r);
        assert!(ev[0].abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);
        // diag(1,2)·Q = [[.5,−.5],[−1,1]]: trace 1.5, det 0
        let r = inertia_of_kq(&[1.0, 2.0], &gm(Graph::path(2).unwrap())).unwrap();
        assert_eq!(r.counts(), (1, 0, 1));
        assert!((reals(&r)[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn kq_on_cycle6_scales_laplacian_spectrum() {
        let r = inertia_of_kq(&[100.0; 6], &gm(Graph::cycle(6).unwrap())).unwrap();
        assert_eq!(r.counts(), (5, 0, 1));
        let want = [0.0, 1.0, 1.0, 3.0, 3.0, 4.0].map(|v| v * 100.0 / 3.0);
        for (got, want) in reals(&r).iter().zip(want) {
            assert!((got - want).abs() < 1e-11, "{got} vs {want}");
        }
    }

    #[test]
    fn kq_rejects_bad_gains() {
        let g = gm(Graph::path(2).unwrap());
        assert_eq!(inertia_of_kq(&[1.0, -1.0], &g), Err(Error::NonPositiveGain(1)));
        assert!(inertia_of_kq(&[1.0], &g).is_err());
    }

    #[test]
    fn error_matrix_blocks_on_path2() {
        let g = gm(Graph::path(2).unwrap());
        let a0 = error_system_matrix(&g, &[1.0, 1.0], 1.0, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                -2.0, 1.0, -1.0, 0.0, //
                1.0, -2.0, 0.0, -1.0, //
                0.5, -0.5, 0.0, 0.0, //
                -0.5, 0.5, 0.0, 0.0,
            ],
        );
        assert_eq!(a0, expected);
        let a0q = error_system_matrix(&g, &[1.0, 1.0], 1.0, 0.1).unwrap();
        assert!((a0q[(2, 0)] - 0.6).abs() < 1e-15 && (a0q[(3, 1)] - 0.6).abs() < 1e-15);
        assert_eq!(a0q[(2, 1)], -0.5);
    }

    #[test]
    fn error_matrix_spectra_on_path2() {
        // Oracle: per Laplacian eigenvector, λ² + (λ_L + m)λ + λ_KQ(+q) = 0.
        //   1-direction: λ² + λ = 0 → {0, −1}
        //   (1,−1)-direction: λ² + 3λ + 1 = 0 → (−3 ± √5)/2
        let g = gm(Graph::path(2).unwrap());
        let r = classify_error_system(&error_system_matrix(&g, &[1.0, 1.0], 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.counts(), (0, 3, 1));
        let s5 = 5.0_f64.sqrt();
        let want = [(-3.0 - s5) / 2.0, -1.0, (-3.0 + s5) / 2.0, 0.0];
        for (got, want) in reals(&r).iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
        // q = 0.1: λ² + λ + 0.1 and λ² + 3λ + 1.1
        let r = classify_error_system(&error_system_matrix(&g, &[1.0, 1.0], 1.0, 0.1).unwrap()).unwrap();
        assert_eq!(r.counts(), (0, 4, 0));
        let (s06, s04) = (0.6_f64.sqrt(), 4.6_f64.sqrt());
        let mut want = [
            (-1.0 - s06) / 2.0,
            (-1.0 + s06) / 2.0,
            (-3.0 - s04) / 2.0,
            (-3.0 + s04) / 2.0,
        ];
        want.sort_by(f64::total_cmp);
        for (got, want) in reals(&r).iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_rejects_odd_or_non_square() {
        assert!(classify_error_system(&DMatrix::zeros(3, 3)).is_err());
        assert!(classify_error_system(&DMatrix::zeros(2, 4)).is_err());
        let r = classify_error_system(&-DMatrix::<f64>::identity(4, 4)).unwrap();
        assert_eq!(r.counts(), (0, 4, 0));
        assert!(r.is_hurwitz());
    }

    #[test]
    fn null_vector_of_error_matrix() {
        let g = gm(Graph::cycle(6).unwrap());
        let a0 = error_system_matrix(&g, &[100.0; 6], 5.0, 0.0).unwrap();
        assert!((a0 * consensus_null_vector(6, 5.0)).amax() < 1e-10);
    }

    #[test]
    fn atilde_is_shifted_laplacian() {
        let r = check_hurwitz_atilde(&gm(Graph::cycle(6).unwrap()), 5.0).unwrap();
        for (got, want) in reals(&r).iter().zip([-9.0, -8.0, -8.0, -6.0, -6.0, -5.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(r.is_hurwitz());
        let r = check_hurwitz_atilde(&gm(Graph::path(2).unwrap()), 1.0).unwrap();
        assert!((reals(&r)[0] + 3.0).abs() < 1e-14 && (reals(&r)[1] + 1.0).abs() < 1e-14);
        assert!(check_hurwitz_atilde(&gm(Graph::path(2).unwrap()), 0.0).is_err());
    }

    #[test]
    fn assumption_boundary_is_infeasible() {
        let g = gm(Graph::cycle(6).unwrap());
        let mu = 0.5;
        let rep = check_gain_condition(&g, &[100.0; 6], 1.0 / (2.0 * mu), 5.0, mu).unwrap();
        assert!(rep.r_min_eig.abs() < 1e-12);
        assert!(!rep.feasible);
    }

    #[test]
    fn example2_gains_are_infeasible_for_every_mu() {
        let g = gm(Graph::cycle(6).unwrap());
        let rep = check_gain_condition(&g, &[100.0; 6], 5.0, 0.0025, 1.0).unwrap();
        assert!(!rep.feasible);
        assert!(rep.rbar_min_eig <= 0.0025 - 0.01);
        let best = best_mu(&g, &[100.0; 6], 5.0, 0.0025).unwrap();
        assert!(!best.feasible);
        assert!(matches!(
            ultimate_bound(&best, 1.0, 1.0),
            Err(Error::AssumptionInfeasible { .. })
        ));
    }

    #[test]
    fn feasible_damping_gives_finite_bound() {
        let g = gm(Graph::cycle(6).unwrap());
        let rep = check_gain_condition(&g, &[100.0; 6], 5.0, 2.0, 0.2).unwrap();
        // R = 2L + 5I on C6: λ_min = 5. Q̄ = (I + A)/3, λ_max(Q̄Q̄ᵀ) = 1:
        // λ_min(R̄) = 2 − 0.01 − 0.2
        assert!(rep.feasible);
        assert!((rep.r_min_eig - 5.0).abs() < 1e-12);
        assert!((rep.rbar_min_eig - 1.79).abs() < 1e-12);

        let w_star = 6.0_f64.sqrt();
        let omegas = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
        let wdot_star = omegas.iter().map(|o| o * o).sum::<f64>().sqrt();
        let b = ultimate_bound(&rep, w_star, wdot_star).unwrap();
        let c = 2.0 * 6.0 + 0.01 * 3.64;
        assert!((b.c - c).abs() < 1e-12);
        assert!((b.nu_x - (c / 5.0).sqrt()).abs() < 1e-12);
        assert!((b.nu_w - (c / 1.79).sqrt()).abs() < 1e-12);
        assert!(b.epsilon_bound > b.bound_floor);
        assert!(b.epsilon_bound.is_finite());

        let zero = ultimate_bound(&rep, 0.0, 0.0).unwrap();
        assert_eq!((zero.c, zero.nu_x, zero.nu_w, zero.epsilon_bound), (0.0, 0.0, 0.0, 0.0));

        let doubled = check_gain_condition(&g, &[100.0; 6], 5.0, 4.0, 0.2).unwrap();
        assert!(ultimate_bound(&doubled, w_star, wdot_star).unwrap().c > b.c);
    }

    #[test]
    fn grid_prefers_feasible_mu() {
        let g = gm(Graph::cycle(6).unwrap());
        let best = best_mu(&g, &[100.0; 6], 5.0, 2.0).unwrap();
        assert!(best.feasible);
        assert!(MU_GRID.contains(&best.mu));
    }
}
