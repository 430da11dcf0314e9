//! Closed-loop vector fields.
//!
//! Every agent applies `u = −L·x − ŵ` (plus `L·ζ` for formations). The
//! disturbance estimate `ŵ` integrates the predictor error `x − x̂` passed
//! through `K·Q`; the predictor `x̂` follows the ideal consensus model with
//! output injection `m·(x − x̂)`. The four modes differ only in how `ŵ`
//! evolves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphMatrices};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Plain Laplacian consensus; `ŵ` is frozen and ignored.
    Baseline,
    /// `ŵ̇ = K·Q·(x − x̂)`
    Reject,
    /// `ŵ̇ = K·(Q + q·I)·(x − x̂)`
    ConstantPoint,
    /// `ŵ̇ = K·[Q·(x − x̂) − κ·ŵ]`
    Damped,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Reject, Mode::ConstantPoint, Mode::Damped];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "Baseline",
            Mode::Reject => "Reject",
            Mode::ConstantPoint => "ConstantPoint",
            Mode::Damped => "Damped",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Controller gains and mode. Construct through [`ControllerConfig::new`] or
/// one of the mode shorthands so the mode invariants always hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    k: Vec<f64>,
    m: f64,
    q: f64,
    kappa: f64,
    zeta: Option<Vec<f64>>,
    mode: Mode,
}

impl ControllerConfig {
    pub fn new(mode: Mode, k: Vec<f64>, m: f64, q: f64, kappa: f64, zeta: Option<Vec<f64>>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::validation("k", "gain vector is empty"));
        }
        if let Some(i) = k.iter().position(|&ki| !(ki > 0.0 && ki.is_finite())) {
            return Err(Error::NonPositiveGain(i));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::validation("m", format!("must be positive, got {m}")));
        }
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::validation("q", format!("must be non-negative, got {q}")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::validation("kappa", format!("must be non-negative, got {kappa}")));
        }
        match mode {
            Mode::Baseline | Mode::Reject if q != 0.0 || kappa != 0.0 => {
                return Err(Error::validation(
                    "mode",
                    format!("{mode} requires q = 0 and kappa = 0"),
                ));
            }
            Mode::ConstantPoint if q <= 0.0 || q.is_nan() || kappa != 0.0 => {
                return Err(Error::validation("mode", "ConstantPoint requires q > 0 and kappa = 0"));
            }
            Mode::Damped if kappa <= 0.0 || kappa.is_nan() || q != 0.0 => {
                return Err(Error::validation("mode", "Damped requires kappa > 0 and q = 0"));
            }
            _ => {}
        }
        if let Some(z) = &zeta {
            if z.len() != k.len() {
                return Err(Error::DimensionMismatch {
                    what: "zeta",
                    expected: k.len(),
                    found: z.len(),
                });
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("zeta", "entries must be finite"));
            }
        }
        Ok(ControllerConfig {
            k,
            m,
            q,
            kappa,
            zeta,
            mode,
        })
    }

    pub fn baseline(k: Vec<f64>, m: f64) -> Result<Self> {
        Self::new(Mode::Baseline, k, m, 0.0, 0.0, None)
    }

    pub fn reject(k: Vec<f64>, m: f64) -> Result<Self> {
        Self::new(Mode::Reject, k, m, 0.0, 0.0, None)
    }

    pub fn constant_point(k: Vec<f64>, m: f64, q: f64) -> Result<Self> {
        Self::new(Mode::ConstantPoint, k, m, q, 0.0, None)
    }

    pub fn damped(k: Vec<f64>, m: f64, kappa: f64) -> Result<Self> {
        Self::new(Mode::Damped, k, m, 0.0, kappa, None)
    }

    pub fn with_formation(self, zeta: Vec<f64>) -> Result<Self> {
        Self::new(self.mode, self.k, self.m, self.q, self.kappa, Some(zeta))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn zeta(&self) -> Option<&[f64]> {
        self.zeta.as_deref()
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }
}

/// State of the closed loop: agent states, predictor states and disturbance
/// estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub what: DVector<f64>,
}

impl LoopState {
    pub fn new(x: DVector<f64>, xhat: DVector<f64>, what: DVector<f64>) -> Result<Self> {
        let n = x.len();
        for (what_name, v) in [("xhat", &xhat), ("what", &what)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what: what_name,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(LoopState { x, xhat, what })
    }

    /// Agents at `x0`, predictor and estimator at zero.
    pub fn from_x0(x0: DVector<f64>) -> Self {
        let n = x0.len();
        LoopState {
            x: x0,
            xhat: DVector::zeros(n),
            what: DVector::zeros(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_x0(DVector::zeros(n))
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `x − x̂`
    pub fn predictor_error(&self) -> DVector<f64> {
        &self.x - &self.xhat
    }

    /// `self + h·d`
    pub fn add_scaled(&self, h: f64, d: &LoopState) -> LoopState {
        LoopState {
            x: &self.x + &d.x * h,
            xhat: &self.xhat + &d.xhat * h,
            what: &self.what + &d.what * h,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(self.xhat.iter())
            .chain(self.what.iter())
            .all(|v| v.is_finite())
    }
}

/// A controller bound to a graph, with the constant matrix products
/// precomputed.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    cfg: &'a ControllerConfig,
    gm: &'a GraphMatrices,
    /// `K·Q`, or `K·(Q + q·I)` in constant-point mode.
    estimator_gain: DMatrix<f64>,
    /// `L·ζ`, zero without a formation.
    formation_input: DVector<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(cfg: &'a ControllerConfig, gm: &'a GraphMatrices) -> Result<Self> {
        let n = gm.n();
        if cfg.n() != n {
            return Err(Error::DimensionMismatch {
                what: "controller gains",
                expected: n,
                found: cfg.n(),
            });
        }
        let k = DMatrix::from_diagonal(&DVector::from_column_slice(cfg.k()));
        let mut projection = gm.localized_projection.clone();
        if cfg.mode() == Mode::ConstantPoint {
            for i in 0..n {
                projection[(i, i)] += cfg.q();
            }
        }
        let estimator_gain = k * projection;
        let formation_input = match cfg.zeta() {
            Some(z) => &gm.laplacian * DVector::from_column_slice(z),
            None => DVector::zeros(n),
        };
        Ok(ClosedLoop {
            cfg,
            gm,
            estimator_gain,
            formation_input,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        self.cfg
    }

    pub fn matrices(&self) -> &GraphMatrices {
        self.gm
    }

    fn check_state(&self, s: &LoopState) -> Result<()> {
        let n = self.gm.n();
        for (what, len) in [("x", s.x.len()), ("xhat", s.xhat.len()), ("what", s.what.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(())
    }

    /// `u = −L·x − ŵ + L·ζ` (the `ŵ` term is dropped in baseline mode).
    pub fn control_input(&self, s: &LoopState) -> Result<DVector<f64>> {
        self.check_state(s)?;
        let mut u = -(&self.gm.laplacian * &s.x) + &self.formation_input;
        if self.cfg.mode() != Mode::Baseline {
            u -= &s.what;
        }
        Ok(u)
    }

    /// Time derivative of the loop state given the true disturbance value.
    pub fn derivative(&self, s: &LoopState, w_now: &DVector<f64>) -> Result<LoopState> {
        let u = self.control_input(s)?;
        if w_now.len() != s.n() {
            return Err(Error::DimensionMismatch {
                what: "disturbance",
                expected: s.n(),
                found: w_now.len(),
            });
        }
        let err = s.predictor_error();
        let x = u + w_now;
        let xhat = -(&self.gm.laplacian * &s.xhat) + &err * self.cfg.m() + &self.formation_input;
        let what = match self.cfg.mode() {
            Mode::Baseline => DVector::zeros(s.n()),
            Mode::Reject | Mode::ConstantPoint => &self.estimator_gain * &err,
            Mode::Damped => {
                let mut d = &self.estimator_gain * &err;
                for (i, di) in d.iter_mut().enumerate() {
                    *di -= self.cfg.kappa() * self.cfg.k()[i] * s.what[i];
                }
                d
            }
        };
        Ok(LoopState { x, xhat, what })
    }
}

pub fn control_input(cfg: &ControllerConfig, gm: &GraphMatrices, s: &LoopState) -> Result<DVector<f64>> {
    ClosedLoop::new(cfg, gm)?.control_input(s)
}

pub fn loop_derivative(
    cfg: &ControllerConfig,
    gm: &GraphMatrices,
    s: &LoopState,
    w_now: &DVector<f64>,
) -> Result<LoopState> {
    ClosedLoop::new(cfg, gm)?.derivative(s, w_now)
}

/// What one agent can observe: its own values and differences to its
/// neighbors. Absolute neighbor values are not exposed.
#[derive(Debug, Clone)]
pub struct NeighborView {
    pub x: f64,
    pub xhat: f64,
    pub what: f64,
    /// `(x_i − x_j, x̂_i − x̂_j, ζ_i − ζ_j)` per neighbor `j`.
    pub relative: Vec<RelativeState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState {
    pub dx: f64,
    pub dxhat: f64,
    pub dzeta: f64,
}

impl NeighborView {
    pub fn observe(g: &Graph, s: &LoopState, zeta: Option<&[f64]>, agent: usize) -> Result<Self> {
        let n = g.n();
        if agent >= n {
            return Err(Error::IndexOutOfRange { index: agent, n });
        }
        if s.n() != n {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: n,
                found: s.n(),
            });
        }
        let relative = g
            .neighbors(agent)
            .iter()
            .map(|&j| RelativeState {
                dx: s.x[agent] - s.x[j],
                dxhat: s.xhat[agent] - s.xhat[j],
                dzeta: zeta.map_or(0.0, |z| z[agent] - z[j]),
            })
            .collect();
        Ok(NeighborView {
            x: s.x[agent],
            xhat: s.xhat[agent],
            what: s.what[agent],
            relative,
        })
    }
}

/// Per-agent outputs of the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOutput {
    pub u: f64,
    pub what_dot: f64,
    pub xhat_dot: f64,
}

/// Evaluates agent `agent`'s controller from its neighbor view only. The
/// degree, and therefore `[K·S]_ii = k_i / (d_i + 1)`, is read from the view.
pub fn local_update(cfg: &ControllerConfig, agent: usize, view: &NeighborView) -> Result<LocalOutput> {
    let k_i = *cfg.k().get(agent).ok_or(Error::IndexOutOfRange {
        index: agent,
        n: cfg.n(),
    })?;
    let degree = view.relative.len() as f64;
    let ks = k_i / (degree + 1.0);

    let mut disagreement = 0.0;
    let mut predictor_disagreement = 0.0;
    let mut error_disagreement = 0.0;
    let mut formation = 0.0;
    for r in &view.relative {
        disagreement += r.dx;
        predictor_disagreement += r.dxhat;
        error_disagreement += r.dx - r.dxhat;
        formation += r.dzeta;
    }
    let err = view.x - view.xhat;

    let mut u = -disagreement + formation;
    if cfg.mode() != Mode::Baseline {
        u -= view.what;
    }
    let what_dot = match cfg.mode() {
        Mode::Baseline => 0.0,
        Mode::Reject => ks * error_disagreement,
        Mode::ConstantPoint => ks * error_disagreement + cfg.q() * k_i * err,
        Mode::Damped => ks * error_disagreement - cfg.kappa() * k_i * view.what,
    };
    let xhat_dot = -predictor_disagreement + cfg.m() * err + formation;
    Ok(LocalOutput { u, what_dot, xhat_dot })
}

/// Observe-then-update for agent `agent`.
pub fn control_input_local(cfg: &ControllerConfig, g: &Graph, s: &LoopState, agent: usize) -> Result<LocalOutput> {
    let view = NeighborView::observe(g, s, cfg.zeta(), agent)?;
    local_update(cfg, agent, &view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c6() -> (Graph, GraphMatrices) {
        let g = Graph::cycle(6).unwrap();
        let gm = GraphMatrices::new(&g).unwrap();
        (g, gm)
    }

    fn random_state<R: Rng>(n: usize, rng: &mut R) -> LoopState {
        let mut v = || DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        LoopState {
            x: v(),
            xhat: v(),
            what: v(),
        }
    }

    #[test]
    fn mode_invariants_enforced() {
        let k = vec![1.0; 3];
        assert!(ControllerConfig::new(Mode::Reject, k.clone(), 1.0, 0.1, 0.0, None).is_err());
        assert!(ControllerConfig::new(Mode::Baseline, k.clone(), 1.0, 0.0, 0.5, None).is_err());
        assert!(ControllerConfig::new(Mode::ConstantPoint, k.clone(), 1.0, 0.0, 0.0, None).is_err());
        assert!(ControllerConfig::new(Mode::Damped, k.clone(), 1.0, 0.1, 0.5, None).is_err());
        assert!(ControllerConfig::new(Mode::Damped, k.clone(), 1.0, 0.0, 0.0, None).is_err());
        assert_eq!(
            ControllerConfig::new(Mode::Reject, vec![1.0, 0.0], 1.0, 0.0, 0.0, None),
            Err(Error::NonPositiveGain(1))
        );
        assert!(ControllerConfig::reject(k.clone(), 0.0).is_err());
        assert!(ControllerConfig::reject(k, 1.0)
            .unwrap()
            .with_formation(vec![0.0; 2])
            .is_err());
    }

    #[test]
    fn consensus_is_an_equilibrium_of_baseline() {
        let (_, gm) = c6();
        let cfg = ControllerConfig::baseline(vec![100.0; 6], 5.0).unwrap();
        let s = LoopState::from_x0(DVector::from_element(6, 0.7));
        assert!(control_input(&cfg, &gm, &s).unwrap().amax() < 1e-15);
    }

    #[test]
    fn estimate_cancels_disturbance() {
        let (_, gm) = c6();
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0).unwrap();
        let w = DVector::from_vec(vec![-4.75, -2.75, -0.75, 1.25, 3.25, 5.25]);
        let s = LoopState {
            x: DVector::zeros(6),
            xhat: DVector::zeros(6),
            what: w.clone(),
        };
        assert_eq!(control_input(&cfg, &gm, &s).unwrap(), -w.clone());
        let d = loop_derivative(&cfg, &gm, &s, &w).unwrap();
        assert!(d.x.amax() < 1e-15);
    }

    #[test]
    fn formation_at_target_has_zero_consensus_input() {
        let (g, gm) = c6();
        let zeta = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0)
            .unwrap()
            .with_formation(zeta.clone())
            .unwrap();
        let s = LoopState::from_x0(DVector::from_vec(zeta));
        let u = control_input(&cfg, &gm, &s).unwrap();
        assert!(u.amax() < 1e-15);
        // per-agent form −Σ[(x_i − x_j) − (ζ_i − ζ_j)] − ŵ_i
        for i in 0..6 {
            let local = control_input_local(&cfg, &g, &s, i).unwrap();
            assert!((local.u - u[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn estimator_derivative_cases() {
        let (_, gm) = c6();
        let k = vec![100.0, 50.0, 20.0, 10.0, 5.0, 1.0];
        let zero = DVector::zeros(6);
        // x = x̂ gives no learning signal
        let s = LoopState {
            x: DVector::from_element(6, 0.3),
            xhat: DVector::from_element(6, 0.3),
            what: zero.clone(),
        };
        let reject = ControllerConfig::reject(k.clone(), 5.0).unwrap();
        assert!(loop_derivative(&reject, &gm, &s, &zero).unwrap().what.amax() < 1e-15);

        // x − x̂ = 1: Q annihilates it, only q·K·1 survives
        let q = 0.025;
        let cp = ControllerConfig::constant_point(k.clone(), 5.0, q).unwrap();
        let s = LoopState {
            x: DVector::from_element(6, 1.0),
            xhat: zero.clone(),
            what: zero.clone(),
        };
        let d = loop_derivative(&cp, &gm, &s, &zero).unwrap();
        for (wd, ki) in d.what.iter().zip(&k) {
            assert!((wd - q * ki).abs() < 1e-12);
        }

        // pure decay
        let kappa = 0.0025;
        let damped = ControllerConfig::damped(k.clone(), 5.0, kappa).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let s = LoopState {
            x: zero.clone(),
            xhat: zero.clone(),
            what: v.clone(),
        };
        let d = loop_derivative(&damped, &gm, &s, &zero).unwrap();
        for i in 0..6 {
            assert!((d.what[i] + kappa * k[i] * v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn local_equals_matrix_form_on_c6() {
        let (g, gm) = c6();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0).unwrap();
        let s = random_state(6, &mut rng);
        let u = control_input(&cfg, &gm, &s).unwrap();
        let d = loop_derivative(&cfg, &gm, &s, &DVector::zeros(6)).unwrap();
        for i in 0..6 {
            let local = control_input_local(&cfg, &g, &s, i).unwrap();
            assert!((local.u - u[i]).abs() < 1e-12);
            assert!((local.what_dot - d.what[i]).abs() < 1e-12);
            assert!((local.xhat_dot - d.xhat[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn local_with_equal_states_reduces_to_estimate() {
        let (g, _) = c6();
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0).unwrap();
        let what = DVector::from_fn(6, |i, _| i as f64);
        let s = LoopState {
            x: DVector::from_element(6, 2.0),
            xhat: DVector::from_element(6, 1.0),
            what,
        };
        for i in 0..6 {
            assert_eq!(control_input_local(&cfg, &g, &s, i).unwrap().u, -(i as f64));
        }
    }

    #[test]
    fn path2_local_coefficient_is_half_gain() {
        let g = Graph::path(2).unwrap();
        let cfg = ControllerConfig::reject(vec![3.0, 8.0], 1.0).unwrap();
        // x̃ = (1, 0): Σ(x̃_i − x̃_j) = ±1, so ŵ̇_i = ±k_i/2
        let s = LoopState {
            x: DVector::from_vec(vec![1.0, 0.0]),
            xhat: DVector::zeros(2),
            what: DVector::zeros(2),
        };
        assert_eq!(control_input_local(&cfg, &g, &s, 0).unwrap().what_dot, 1.5);
        assert_eq!(control_input_local(&cfg, &g, &s, 1).unwrap().what_dot, -4.0);
        assert!(control_input_local(&cfg, &g, &s, 2).is_err());
    }

    #[test]
    fn invariance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = rng.gen_range(2..=10);
            let g = Graph::random_connected(n, 0.3, &mut rng).unwrap();
            let gm = GraphMatrices::new(&g).unwrap();
            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..100.0)).collect();
            let s = random_state(n, &mut rng);
            let zero = DVector::zeros(n);

            // baseline conserves the mean without disturbance
            let base = ControllerConfig::baseline(k.clone(), 2.0).unwrap();
            let d = loop_derivative(&base, &gm, &s, &zero).unwrap();
            assert!(d.x.sum().abs() < 1e-12);

            // ŵ̇ ∈ col(K·S·L) ⇒ 1ᵀ(K·S)⁻¹ŵ̇ = 0
            let reject = ControllerConfig::reject(k.clone(), 2.0).unwrap();
            let d = loop_derivative(&reject, &gm, &s, &zero).unwrap();
            let weighted: f64 = (0..n).map(|i| d.what[i] / (k[i] * gm.scaling[(i, i)])).sum();
            assert!(weighted.abs() < 1e-12);

            // shifting all agents leaves u unchanged
            let zeta: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
            for cfg in [base, reject.clone(), reject.with_formation(zeta).unwrap()] {
                let mut shifted = s.clone();
                shifted.x.add_scalar_mut(3.7);
                let a = control_input(&cfg, &gm, &s).unwrap();
                let b = control_input(&cfg, &gm, &shifted).unwrap();
                assert!((a - b).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (_, gm) = c6();
        let cfg = ControllerConfig::reject(vec![1.0; 5], 1.0).unwrap();
        assert!(matches!(
            ClosedLoop::new(&cfg, &gm),
            Err(Error::DimensionMismatch { .. })
        ));
        let cfg = ControllerConfig::reject(vec![1.0; 6], 1.0).unwrap();
        let s = LoopState::zeros(5);
        assert!(control_input(&cfg, &gm, &s).is_err());
    }
}
