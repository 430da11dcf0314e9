//! Seeded randomized property suite over the structural claims: inertia of
//! the estimator and error-system matrices, matrix identities, and the
//! per-agent implementation.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controller::{control_input_local, ClosedLoop, ControllerConfig, LoopState, Mode};
use crate::error::Result;
use crate::graph::{Graph, GraphMatrices};
use crate::spectral::{
    check_hurwitz_atilde, classify_error_system, consensus_null_vector, error_system_matrix, inertia_of_kq,
    kq_direct_eigenvalues,
};

pub const GRAPH_CASES: usize = 50;
pub const LOCALITY_CASES: usize = 100;

/// Outcome of one property over its random cases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed error measure; its meaning depends on the check.
    pub worst: f64,
    pub tolerance: f64,
    pub first_failure: Option<String>,
}

impl CheckOutcome {
    fn new(name: &'static str, tolerance: f64) -> Self {
        CheckOutcome {
            name,
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, error: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if error.is_nan() {
            self.worst = f64::NAN;
        } else if !self.worst.is_nan() {
            self.worst = self.worst.max(error);
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    fn within(&mut self, error: f64, describe: impl FnOnce() -> String) {
        let ok = error <= self.tolerance;
        self.record(error, ok, describe);
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<24} cases={:<4} failures={:<3} worst={:.3e} tol={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.tolerance
        )?;
        if let Some(msg) = &self.first_failure {
            write!(f, "  first failure: {msg}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let passed = self.checks.iter().filter(|c| c.passed()).count();
        write!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

/// One member of the random family: a connected graph on 2..=10 nodes with
/// diagonal gains drawn from `[0.1, 100]`.
pub struct RandomCase {
    pub graph: Graph,
    pub matrices: GraphMatrices,
    pub k: Vec<f64>,
}

pub fn random_case<R: Rng + ?Sized>(rng: &mut R) -> Result<RandomCase> {
    let n = rng.gen_range(2..=10);
    let p = rng.gen_range(0.0..0.6);
    let graph = Graph::random_connected(n, p, rng)?;
    let matrices = GraphMatrices::new(&graph)?;
    let k = (0..n).map(|_| rng.gen_range(0.1..=100.0)).collect();
    Ok(RandomCase { graph, matrices, k })
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0))
}

/// `K·Q` has exactly `n − 1` positive eigenvalues and one zero.
pub fn kq_inertia_check(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 1);
    let mut out = CheckOutcome::new("kq_inertia", 0.0);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let n = c.graph.n();
        let counts = inertia_of_kq(&c.k, &c.matrices)?.counts();
        let ok = counts == (n - 1, 0, 1);
        out.record(if ok { 0.0 } else { 1.0 }, ok, || format!("n={n}: inertia {counts:?}"));
    }
    Ok(out)
}

/// The symmetric route `C·L·C` and the direct eigenvalues of `K·Q` agree.
pub fn kq_similarity(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 2);
    let mut out = CheckOutcome::new("kq_similarity", 1e-8);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let sym = inertia_of_kq(&c.k, &c.matrices)?;
        let direct = kq_direct_eigenvalues(&c.k, &c.matrices)?;
        let err = sym
            .eigenvalues
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        out.within(err, || format!("n={}: max eigenvalue gap {err:.3e}", c.graph.n()));
    }
    Ok(out)
}

/// With `q = 0` the error matrix has `2n − 1` stable eigenvalues, one zero,
/// and annihilates `[1ᵀ, −m·1ᵀ]ᵀ`.
pub fn error_matrix_inertia_check(seed: u64, cases: usize) -> Result<(CheckOutcome, CheckOutcome)> {
    let mut rng = rng_for(seed, 3);
    let mut inertia = CheckOutcome::new("error_matrix_inertia", 0.0);
    let mut null = CheckOutcome::new("error_matrix_null", 1e-10);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let n = c.graph.n();
        let m = rng.gen_range(0.5..=10.0);
        let a = error_system_matrix(&c.matrices, &c.k, m, 0.0)?;
        let counts = classify_error_system(&a)?.counts();
        let ok = counts == (0, 2 * n - 1, 1);
        inertia.record(if ok { 0.0 } else { 1.0 }, ok, || {
            format!("n={n}, m={m:.3}: inertia {counts:?}")
        });
        let residual = (&a * consensus_null_vector(n, m)).amax();
        null.within(residual, || format!("n={n}, m={m:.3}: residual {residual:.3e}"));
    }
    Ok((inertia, null))
}

/// Any `q > 0` makes the error matrix Hurwitz.
pub fn constant_point_inertia(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 4);
    let mut out = CheckOutcome::new("constant_point_hurwitz", 0.0);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let n = c.graph.n();
        let m = rng.gen_range(0.5..=10.0);
        let q = 10f64.powf(rng.gen_range(-3.0..=0.0));
        let counts = classify_error_system(&error_system_matrix(&c.matrices, &c.k, m, q)?)?.counts();
        let ok = counts == (0, 2 * n, 0);
        out.record(if ok { 0.0 } else { 1.0 }, ok, || {
            format!("n={n}, m={m:.3}, q={q:.3e}: inertia {counts:?}")
        });
    }
    Ok(out)
}

/// Every eigenvalue of `−L − m·I` has real part at most `−m`.
pub fn predictor_hurwitz(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 5);
    let mut out = CheckOutcome::new("predictor_hurwitz", 1e-10);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let m = rng.gen_range(0.5..=10.0);
        let excess = check_hurwitz_atilde(&c.matrices, m)?.max_real_part() + m;
        out.within(excess.max(0.0), || {
            format!("n={}, m={m:.3}: max Re λ + m = {excess:.3e}", c.graph.n())
        });
    }
    Ok(out)
}

/// `L·1 = 0`, `Q·1 = 0`, `Q = S·L`, and the projector algebra.
pub fn matrix_identities(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 6);
    let mut out = CheckOutcome::new("matrix_identities", 1e-12);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let gm = &c.matrices;
        let n = gm.n();
        let ones = DVector::from_element(n, 1.0);
        let p = &gm.proj_col;
        let errs = [
            (&gm.laplacian * &ones).amax(),
            (&gm.localized_projection * &ones).amax(),
            (&gm.localized_projection - &gm.scaling * &gm.laplacian).amax(),
            (p * p - p).amax(),
            (p + &gm.proj_null - DMatrix::identity(n, n)).amax(),
            (p * &gm.laplacian - &gm.laplacian).amax(),
        ];
        let err = errs.iter().copied().fold(0.0, f64::max);
        out.within(err, || format!("n={n}: identity errors {errs:?}"));
    }
    Ok(out)
}

fn random_config<R: Rng + ?Sized>(rng: &mut R, k: Vec<f64>) -> Result<ControllerConfig> {
    let n = k.len();
    let mode = Mode::ALL[rng.gen_range(0..Mode::ALL.len())];
    let m = rng.gen_range(0.5..=10.0);
    let q = if mode == Mode::ConstantPoint {
        rng.gen_range(1e-3..=1.0)
    } else {
        0.0
    };
    let kappa = if mode == Mode::Damped {
        rng.gen_range(1e-3..=1.0)
    } else {
        0.0
    };
    let zeta = rng
        .gen_bool(0.5)
        .then(|| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    ControllerConfig::new(mode, k, m, q, kappa, zeta)
}

fn random_state<R: Rng + ?Sized>(rng: &mut R, n: usize) -> LoopState {
    LoopState {
        x: random_vec(rng, n),
        xhat: random_vec(rng, n),
        what: random_vec(rng, n),
    }
}

/// Per-agent evaluation from neighbor-relative data equals the matrix form.
pub fn locality(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 7);
    let mut out = CheckOutcome::new("locality", 1e-12);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let n = c.graph.n();
        let cfg = random_config(&mut rng, c.k.clone())?;
        let s = random_state(&mut rng, n);
        let lp = ClosedLoop::new(&cfg, &c.matrices)?;
        let u = lp.control_input(&s)?;
        let d = lp.derivative(&s, &DVector::zeros(n))?;
        let mut err = 0.0_f64;
        for i in 0..n {
            let local = control_input_local(&cfg, &c.graph, &s, i)?;
            err = err
                .max((local.u - u[i]).abs())
                .max((local.what_dot - d.what[i]).abs())
                .max((local.xhat_dot - d.xhat[i]).abs());
        }
        out.within(err, || format!("n={n}, mode={}: gap {err:.3e}", cfg.mode()));
    }
    Ok(out)
}

/// Mean conservation in Baseline, `1ᵀ(K·S)⁻¹ŵ̇ = 0` in Reject, and
/// invariance of `u` under `x → x + c·1` in every mode.
pub fn controller_invariances(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 8);
    let mut out = CheckOutcome::new("controller_invariances", 1e-12);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let n = c.graph.n();
        let cfg = random_config(&mut rng, c.k.clone())?;
        let s = random_state(&mut rng, n);
        let lp = ClosedLoop::new(&cfg, &c.matrices)?;
        let zero = DVector::zeros(n);
        let d = lp.derivative(&s, &zero)?;

        let mean_err = if cfg.mode() == Mode::Baseline && cfg.zeta().is_none() {
            d.x.sum().abs()
        } else {
            0.0
        };
        let est_err = if cfg.mode() == Mode::Reject {
            (0..n)
                .map(|i| d.what[i] / (c.k[i] * c.matrices.scaling[(i, i)]))
                .sum::<f64>()
                .abs()
        } else {
            0.0
        };
        let shift = rng.gen_range(-10.0..=10.0);
        let shifted = LoopState {
            x: s.x.add_scalar(shift),
            ..s.clone()
        };
        let shift_err = (lp.control_input(&shifted)? - lp.control_input(&s)?).amax();
        let err = mean_err.max(est_err).max(shift_err);
        out.within(err, || {
            format!(
                "n={n}, mode={}: mean {mean_err:.3e}, estimator {est_err:.3e}, shift {shift_err:.3e}",
                cfg.mode()
            )
        });
    }
    Ok(out)
}

/// Runs every check with the default case counts.
pub fn run_suite(seed: u64) -> Result<SuiteReport> {
    let (inertia, null) = error_matrix_inertia_check(seed, GRAPH_CASES)?;
    let checks = vec![
        matrix_identities(seed, GRAPH_CASES)?,
        kq_inertia_check(seed, GRAPH_CASES)?,
        kq_similarity(seed, GRAPH_CASES)?,
        inertia,
        null,
        constant_point_inertia(seed, GRAPH_CASES)?,
        predictor_hurwitz(seed, GRAPH_CASES)?,
        locality(seed, LOCALITY_CASES)?,
        controller_invariances(seed, LOCALITY_CASES)?,
    ];
    Ok(SuiteReport { seed, checks })
}
