//! Post-hoc checks on recorded trajectories.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::controller::{ControllerConfig, Mode};
use crate::error::{Error, Result};
use crate::sim::{DisturbanceSignal, Trajectory};
use crate::spectral::BoundReport;

/// `‖x(T) − x(T/2)‖∞` below this counts as settled.
pub const SETTLE_TOL: f64 = 1e-3;

/// Relative slack in the sampled dissipation inequality.
pub const DISSIPATION_TOL: f64 = 1e-2;

/// `max(v) − min(v)`
pub fn spread(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.max() - v.min()
}

/// Population standard deviation.
pub fn stdev(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.mean();
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Predicted consensus value `(1/n)·[1ᵀx0 − ∫₀ᵀ 1ᵀ(ŵ − w) dσ]`, with the
/// integral taken by the trapezoidal rule over the retained samples.
pub fn consensus_limit_quadrature(traj: &Trajectory, w: &DisturbanceSignal) -> Result<f64> {
    if !w.is_constant() {
        return Err(Error::NotConstantDisturbance);
    }
    if traj.is_empty() {
        return Err(Error::validation("trajectory", "no samples"));
    }
    let n = traj.n() as f64;
    let w_sum = w.evaluate(0.0).sum();
    let integrand: Vec<f64> = traj.what.iter().map(|wh| wh.sum() - w_sum).collect();
    let mut integral = 0.0;
    for i in 1..traj.len() {
        integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (integrand[i] + integrand[i - 1]);
    }
    Ok((traj.x[0].sum() - integral) / n)
}

/// `max_{i,j} |(x_i(T) − x_j(T)) − (ζ_i − ζ_j)|`
pub fn formation_deviation(traj: &Trajectory, zeta: &[f64]) -> Result<f64> {
    let x = &traj.final_state().x;
    if zeta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "zeta",
            expected: x.len(),
            found: zeta.len(),
        });
    }
    Ok(spread(&(x - DVector::from_column_slice(zeta))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Boundedness {
    /// `max_t ‖u(t)‖₂`
    pub u_sup: f64,
    /// `max_t |u_i(t)|` per agent.
    pub channel_sup: Vec<f64>,
}

pub fn boundedness_check(traj: &Trajectory) -> Result<Boundedness> {
    let mut u_sup = 0.0_f64;
    let mut channel_sup = vec![0.0_f64; traj.n()];
    for (t, u) in traj.times.iter().zip(&traj.u) {
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { time: *t });
        }
        u_sup = u_sup.max(u.norm());
        for (sup, v) in channel_sup.iter_mut().zip(u.iter()) {
            *sup = sup.max(v.abs());
        }
    }
    Ok(Boundedness { u_sup, channel_sup })
}

/// `V = x̃ᵀx̃ + w̃ᵀK⁻¹w̃` per sample, with `w̃ = ŵ − w`.
pub fn lyapunov_series(traj: &Trajectory, k: &[f64]) -> Result<Vec<f64>> {
    if k.len() != traj.n() {
        return Err(Error::DimensionMismatch {
            what: "gain vector",
            expected: traj.n(),
            found: k.len(),
        });
    }
    Ok((0..traj.len())
        .map(|i| {
            let xt = &traj.x[i] - &traj.xhat[i];
            let wt = &traj.what[i] - &traj.w_true[i];
            xt.norm_squared() + wt.iter().zip(k).map(|(w, ki)| w * w / ki).sum::<f64>()
        })
        .collect())
}

/// Weighted error norm `‖e(t)‖ = V^{1/2}` per sample.
pub fn error_norm_series(traj: &Trajectory, k: &[f64]) -> Result<Vec<f64>> {
    Ok(lyapunov_series(traj, k)?.into_iter().map(f64::sqrt).collect())
}

/// Samples at or after `from_time` whose weighted error norm is not below
/// `epsilon`.
pub fn ultimate_bound_violations(traj: &Trajectory, k: &[f64], epsilon: f64, from_time: f64) -> Result<usize> {
    let norms = error_norm_series(traj, k)?;
    Ok(traj
        .times
        .iter()
        .zip(&norms)
        .filter(|(t, e)| **t >= from_time && **e >= epsilon)
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationReport {
    pub checked: usize,
    pub satisfied: usize,
}

impl DissipationReport {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.checked as f64
        }
    }
}

/// Checks `V̇ ≤ −λ_min(R)‖x̃‖² − λ_min(R̄)‖w̃‖² + c` at every interior
/// sample, with `V̇` from central differences.
pub fn dissipation_check(traj: &Trajectory, k: &[f64], bound: &BoundReport) -> Result<DissipationReport> {
    let v = lyapunov_series(traj, k)?;
    let mut report = DissipationReport {
        checked: 0,
        satisfied: 0,
    };
    for i in 1..traj.len().saturating_sub(1) {
        let dt = traj.times[i + 1] - traj.times[i - 1];
        let vdot = (v[i + 1] - v[i - 1]) / dt;
        let xt = (&traj.x[i] - &traj.xhat[i]).norm_squared();
        let wt = (&traj.what[i] - &traj.w_true[i]).norm_squared();
        let rhs = -bound.assumption.r_min_eig * xt - bound.assumption.rbar_min_eig * wt + bound.c;
        report.checked += 1;
        if vdot <= rhs + DISSIPATION_TOL * vdot.abs().max(1.0) {
            report.satisfied += 1;
        }
    }
    Ok(report)
}

/// Everything the convergence claims can be judged by.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub mode: String,
    pub n: usize,
    pub final_time: f64,
    pub spread_final: f64,
    /// Largest spread over samples with `t ≥ T/2`.
    pub spread_late_max: f64,
    pub consensus_value: f64,
    pub settle_delta: f64,
    pub settled: bool,
    pub predicted_limit: Option<f64>,
    pub limit_residual: Option<f64>,
    pub what_error: f64,
    pub what_offset_mean: f64,
    pub what_offset_stdev: f64,
    /// Estimated null-space coefficient: `mean(x − x̂)` at `T`.
    pub epsilon_consensus: f64,
    pub xtilde_stdev: f64,
    /// `max_i |w̃_i(T) + m·x̃_i(T)|`
    pub null_direction_residual: f64,
    pub formation_deviation: Option<f64>,
    pub u_sup: f64,
    pub error_norm_final: f64,
    pub error_norm_late_max: f64,
    pub epsilon_bound: Option<f64>,
    pub ebound_violations: Option<usize>,
    pub dissipation_fraction: Option<f64>,
}

impl ConvergenceReport {
    /// `bound` is only used for damped runs.
    pub fn analyze(
        traj: &Trajectory,
        cfg: &ControllerConfig,
        disturbance: &DisturbanceSignal,
        bound: Option<&BoundReport>,
    ) -> Result<Self> {
        if traj.is_empty() {
            return Err(Error::validation("trajectory", "no samples"));
        }
        let last = traj.final_state();
        let final_time = traj.final_time();
        let half = traj.index_near(final_time / 2.0);
        let settle_delta = (&last.x - &traj.x[half]).amax();

        let (predicted_limit, limit_residual) = if cfg.mode() != Mode::Baseline && disturbance.is_constant() {
            let limit = consensus_limit_quadrature(traj, disturbance)?;
            (Some(limit), Some((last.x.mean() - limit).abs()))
        } else {
            (None, None)
        };

        let w_final = traj.w_true.last().expect("non-empty");
        let offset = &last.what - w_final;
        let xt = last.predictor_error();
        let null_direction_residual = (&offset + &xt * cfg.m()).amax();

        let late: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= final_time / 2.0).collect();
        let spread_late_max = late.iter().map(|&i| spread(&traj.x[i])).fold(0.0, f64::max);

        let norms = error_norm_series(traj, cfg.k())?;
        let error_norm_late_max = late.iter().map(|&i| norms[i]).fold(0.0, f64::max);

        let damped_bound = bound.filter(|_| cfg.mode() == Mode::Damped);
        let (epsilon_bound, ebound_violations, dissipation_fraction) = match damped_bound {
            Some(b) => (
                Some(b.epsilon_bound),
                Some(ultimate_bound_violations(
                    traj,
                    cfg.k(),
                    b.epsilon_bound,
                    final_time / 2.0,
                )?),
                Some(dissipation_check(traj, cfg.k(), b)?.fraction()),
            ),
            None => (None, None, None),
        };

        Ok(ConvergenceReport {
            mode: cfg.mode().name().to_string(),
            n: traj.n(),
            final_time,
            spread_final: spread(&last.x),
            spread_late_max,
            consensus_value: last.x.mean(),
            settle_delta,
            settled: settle_delta < SETTLE_TOL,
            predicted_limit,
            limit_residual,
            what_error: offset.amax(),
            what_offset_mean: offset.mean(),
            what_offset_stdev: stdev(&offset),
            epsilon_consensus: xt.mean(),
            xtilde_stdev: stdev(&xt),
            null_direction_residual,
            formation_deviation: cfg.zeta().map(|z| formation_deviation(traj, z)).transpose()?,
            u_sup: boundedness_check(traj)?.u_sup,
            error_norm_final: *norms.last().expect("non-empty"),
            error_norm_late_max,
            epsilon_bound,
            ebound_violations,
            dissipation_fraction,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Field names and display values in declaration order; absent
    /// optional fields read `n/a`.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let value = serde_json::to_value(self).expect("report serializes");
        FIELD_ORDER
            .iter()
            .map(|key| {
                let text = match &value[*key] {
                    serde_json::Value::Null => "n/a".to_string(),
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Number(num) => match num.as_f64() {
                        Some(f) if num.is_f64() => format!("{f:.9e}"),
                        _ => num.to_string(),
                    },
                    other => other.to_string(),
                };
                (*key, text)
            })
            .collect()
    }

    /// Aligned `key : value` lines.
    pub fn to_text(&self) -> String {
        align(&self.fields())
    }
}

pub fn align(fields: &[(&str, String)]) -> String {
    let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (key, text) in fields {
        let _ = writeln!(out, "{key:<width$} : {text}");
    }
    out
}

const FIELD_ORDER: &[&str] = &[
    "mode",
    "n",
    "final_time",
    "spread_final",
    "spread_late_max",
    "consensus_value",
    "settle_delta",
    "settled",
    "predicted_limit",
    "limit_residual",
    "what_error",
    "what_offset_mean",
    "what_offset_stdev",
    "epsilon_consensus",
    "xtilde_stdev",
    "null_direction_residual",
    "formation_deviation",
    "u_sup",
    "error_norm_final",
    "error_norm_late_max",
    "epsilon_bound",
    "ebound_violations",
    "dissipation_fraction",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::LoopState;
    use crate::graph::{Graph, GraphMatrices};
    use crate::sim::{simulate, SimSettings};

    const EXAMPLE_W: [f64; 6] = [-4.75, -2.75, -0.75, 1.25, 3.25, 5.25];
    const EXAMPLE_X0: [f64; 6] = [-0.4, -0.2, 0.0, 0.4, 0.6, 0.8];

    fn run(cfg: &ControllerConfig, d: &DisturbanceSignal, init: &LoopState, horizon: f64) -> Trajectory {
        let gm = GraphMatrices::new(&Graph::cycle(6).unwrap()).unwrap();
        simulate(
            cfg,
            &gm,
            d,
            init,
            &SimSettings {
                horizon,
                ..SimSettings::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn spread_and_stdev() {
        let v = DVector::from_vec(vec![1.0, 3.0, -2.0]);
        assert_eq!(spread(&v), 5.0);
        assert!((stdev(&DVector::from_vec(vec![1.0, 3.0])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_without_disturbance_is_the_initial_mean() {
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0).unwrap();
        let d = DisturbanceSignal::Zero { n: 6 };
        let traj = run(&cfg, &d, &LoopState::from_x0(DVector::from_row_slice(&EXAMPLE_X0)), 1.0);
        // x̂ starts at 0 ≠ x, so ŵ moves; with x0 = x̂0 it would stay zero
        let init = LoopState {
            x: DVector::from_row_slice(&EXAMPLE_X0),
            xhat: DVector::from_row_slice(&EXAMPLE_X0),
            what: DVector::zeros(6),
        };
        let still = run(&cfg, &d, &init, 1.0);
        assert!(still.what.iter().all(|w| w.amax() == 0.0));
        let limit = consensus_limit_quadrature(&still, &d).unwrap();
        assert!((limit - 0.2).abs() < 1e-15);
        assert!(consensus_limit_quadrature(&traj, &d).is_ok());
        let bank = DisturbanceSignal::sinusoid_bank(vec![1.0; 6], vec![1.0; 6], vec![0.0; 6]).unwrap();
        assert_eq!(
            consensus_limit_quadrature(&traj, &bank),
            Err(Error::NotConstantDisturbance)
        );
    }

    #[test]
    fn example1_reject_report() {
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0).unwrap();
        let d = DisturbanceSignal::Constant(DVector::from_row_slice(&EXAMPLE_W));
        let traj = run(
            &cfg,
            &d,
            &LoopState::from_x0(DVector::from_row_slice(&EXAMPLE_X0)),
            20.0,
        );
        let rep = ConvergenceReport::analyze(&traj, &cfg, &d, None).unwrap();
        assert!(rep.spread_final < 1e-3);
        assert!(rep.limit_residual.unwrap() < 1e-3);
        assert!(rep.null_direction_residual < 1e-3);
        assert!(rep.xtilde_stdev < 1e-4);
        // w̃ → −εm·1: common offset, no spread
        assert!(rep.what_offset_stdev < 1e-3);
        assert!((rep.what_offset_mean + 5.0 * rep.epsilon_consensus).abs() < 1e-3);
        assert!(rep.u_sup.is_finite());
        assert!(rep.formation_deviation.is_none());
        assert!(rep.ebound_violations.is_none());
        let text = rep.to_text();
        assert!(text.lines().count() == FIELD_ORDER.len());
        assert!(text.contains("formation_deviation") && text.contains("n/a"));
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json["mode"], "Reject");
    }

    #[test]
    fn zero_disturbance_baseline_has_zero_input_from_consensus() {
        let cfg = ControllerConfig::baseline(vec![1.0; 6], 1.0).unwrap();
        let d = DisturbanceSignal::Zero { n: 6 };
        let init = LoopState::from_x0(DVector::from_element(6, 0.4));
        let traj = run(&cfg, &d, &init, 2.0);
        assert_eq!(boundedness_check(&traj).unwrap().u_sup, 0.0);
    }

    #[test]
    fn error_norm_cases() {
        let cfg = ControllerConfig::reject(vec![1.0; 6], 1.0).unwrap();
        let w = DVector::from_row_slice(&EXAMPLE_W);
        let d = DisturbanceSignal::Constant(w.clone());
        let init = LoopState {
            x: DVector::from_element(6, 1.0),
            xhat: DVector::from_element(6, 1.0),
            what: w.clone(),
        };
        let traj = run(&cfg, &d, &init, 0.1);
        assert!(error_norm_series(&traj, cfg.k()).unwrap().iter().all(|&e| e < 1e-12));

        let init = LoopState::from_x0(DVector::from_row_slice(&EXAMPLE_X0));
        let traj = run(&cfg, &d, &init, 0.1);
        let norms = error_norm_series(&traj, cfg.k()).unwrap();
        let xt = &traj.x[0] - &traj.xhat[0];
        let wt = &traj.what[0] - &traj.w_true[0];
        let euclid = (xt.norm_squared() + wt.norm_squared()).sqrt();
        assert!((norms[0] - euclid).abs() < 1e-14);
    }

    #[test]
    fn formation_with_zero_offsets_is_spread() {
        let cfg = ControllerConfig::reject(vec![100.0; 6], 5.0).unwrap();
        let d = DisturbanceSignal::Constant(DVector::from_row_slice(&EXAMPLE_W));
        let traj = run(&cfg, &d, &LoopState::from_x0(DVector::from_row_slice(&EXAMPLE_X0)), 0.5);
        let dev = formation_deviation(&traj, &[0.0; 6]).unwrap();
        assert_eq!(dev, spread(&traj.final_state().x));
        assert!(formation_deviation(&traj, &[0.0; 5]).is_err());
    }

    #[test]
    fn non_finite_input_is_flagged() {
        let cfg = ControllerConfig::reject(vec![1.0; 6], 1.0).unwrap();
        let d = DisturbanceSignal::Zero { n: 6 };
        let mut traj = run(&cfg, &d, &LoopState::zeros(6), 0.05);
        traj.u[2][1] = f64::NAN;
        assert!(matches!(boundedness_check(&traj), Err(Error::NonFiniteState { .. })));
    }
}
