//! Disturbance models and fixed-step RK4 integration of the closed loop.

use std::path::Path;

use nalgebra::DVector;

use crate::controller::{ClosedLoop, ControllerConfig, LoopState};
use crate::error::{Error, Result};
use crate::graph::GraphMatrices;
use crate::io::{fmt_f64, write_atomic};

/// The true (unknown to the controller) input disturbance `w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    Zero {
        n: usize,
    },
    Constant(DVector<f64>),
    /// `w_i(t) = amplitude_i · sin(omega_i · t + phase_i)`, phases in radians.
    SinusoidBank {
        amplitude: DVector<f64>,
        omega: DVector<f64>,
        phase: DVector<f64>,
    },
}

impl DisturbanceSignal {
    pub fn sinusoid_bank(amplitude: Vec<f64>, omega: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        let n = amplitude.len();
        for (what, len) in [("omega", omega.len()), ("phase", phase.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(DisturbanceSignal::SinusoidBank {
            amplitude: DVector::from_vec(amplitude),
            omega: DVector::from_vec(omega),
            phase: DVector::from_vec(phase),
        })
    }

    pub fn n(&self) -> usize {
        match self {
            DisturbanceSignal::Zero { n } => *n,
            DisturbanceSignal::Constant(w) => w.len(),
            DisturbanceSignal::SinusoidBank { amplitude, .. } => amplitude.len(),
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, DisturbanceSignal::SinusoidBank { .. })
    }

    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        match self {
            DisturbanceSignal::Zero { n } => DVector::zeros(*n),
            DisturbanceSignal::Constant(w) => w.clone(),
            DisturbanceSignal::SinusoidBank {
                amplitude,
                omega,
                phase,
            } => DVector::from_fn(amplitude.len(), |i, _| amplitude[i] * (omega[i] * t + phase[i]).sin()),
        }
    }

    /// Upper bound on `‖w(t)‖₂`.
    pub fn w_star(&self) -> f64 {
        match self {
            DisturbanceSignal::Zero { .. } => 0.0,
            DisturbanceSignal::Constant(w) => w.norm(),
            DisturbanceSignal::SinusoidBank { amplitude, .. } => amplitude.norm(),
        }
    }

    /// Upper bound on `‖ẇ(t)‖₂`.
    pub fn wdot_star(&self) -> f64 {
        match self {
            DisturbanceSignal::Zero { .. } | DisturbanceSignal::Constant(_) => 0.0,
            DisturbanceSignal::SinusoidBank { amplitude, omega, .. } => amplitude.component_mul(omega).norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub horizon: f64,
    pub step: f64,
    pub sample_every: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            horizon: 20.0,
            step: 1e-3,
            sample_every: 10,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation(
                "T",
                format!("horizon must be positive, got {}", self.horizon),
            ));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation(
                "h",
                format!("step must be positive, got {}", self.step),
            ));
        }
        if self.sample_every == 0 {
            return Err(Error::validation("sample_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; the last step lands at or just past the horizon.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }
}

/// One classical RK4 step of `ẏ = f(t, y)`.
pub fn rk4_step_with<F>(y: &DVector<f64>, t: f64, h: f64, mut f: F) -> DVector<f64>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// One RK4 step of the closed loop; the disturbance is sampled at `t`,
/// `t + h/2` and `t + h`.
pub fn rk4_step(lp: &ClosedLoop<'_>, s: &LoopState, d: &DisturbanceSignal, t: f64, h: f64) -> Result<LoopState> {
    let w0 = d.evaluate(t);
    let wm = d.evaluate(t + 0.5 * h);
    let w1 = d.evaluate(t + h);
    let k1 = lp.derivative(s, &w0)?;
    let k2 = lp.derivative(&s.add_scaled(0.5 * h, &k1), &wm)?;
    let k3 = lp.derivative(&s.add_scaled(0.5 * h, &k2), &wm)?;
    let k4 = lp.derivative(&s.add_scaled(h, &k3), &w1)?;
    let combine = |a: &DVector<f64>, b1: &DVector<f64>, b2: &DVector<f64>, b3: &DVector<f64>, b4: &DVector<f64>| {
        a + (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0)
    };
    let next = LoopState {
        x: combine(&s.x, &k1.x, &k2.x, &k3.x, &k4.x),
        xhat: combine(&s.xhat, &k1.xhat, &k2.xhat, &k3.xhat, &k4.xhat),
        what: combine(&s.what, &k1.what, &k2.what, &k3.what, &k4.what),
    };
    if !next.is_finite() {
        return Err(Error::NonFiniteState { time: t + h });
    }
    Ok(next)
}

/// Sampled closed-loop history.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xhat: Vec<DVector<f64>>,
    pub what: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w_true: Vec<DVector<f64>>,
}

impl Trajectory {
    fn with_capacity(cap: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(cap),
            x: Vec::with_capacity(cap),
            xhat: Vec::with_capacity(cap),
            what: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            w_true: Vec::with_capacity(cap),
        }
    }

    fn push(&mut self, t: f64, s: &LoopState, u: DVector<f64>, w: DVector<f64>) {
        self.times.push(t);
        self.x.push(s.x.clone());
        self.xhat.push(s.xhat.clone());
        self.what.push(s.what.clone());
        self.u.push(u);
        self.w_true.push(w);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.x.first().map_or(0, |v| v.len())
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn state(&self, i: usize) -> LoopState {
        LoopState {
            x: self.x[i].clone(),
            xhat: self.xhat[i].clone(),
            what: self.what[i].clone(),
        }
    }

    pub fn final_state(&self) -> LoopState {
        self.state(self.len() - 1)
    }

    /// Index of the sample closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&s| s < t);
        if idx == 0 {
            0
        } else if idx >= self.len() {
            self.len() - 1
        } else if (self.times[idx] - t).abs() < (t - self.times[idx - 1]).abs() {
            idx
        } else {
            idx - 1
        }
    }

    pub fn csv_header(n: usize) -> String {
        let mut cols = vec!["t".to_string()];
        for prefix in ["x", "xhat", "what", "u", "w"] {
            cols.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = Self::csv_header(n);
        out.push('\n');
        for i in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[i])];
            for block in [&self.x[i], &self.xhat[i], &self.what[i], &self.u[i], &self.w_true[i]] {
                row.extend(block.iter().map(|&v| fmt_f64(v)));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty CSV".into(),
        })?;
        let ncols = header.split(',').count();
        if ncols < 6 || (ncols - 1) % 5 != 0 {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected column count {ncols}"),
            });
        }
        let n = (ncols - 1) / 5;
        if header != Self::csv_header(n) {
            return Err(Error::Parse {
                line: 1,
                message: "unexpected header".into(),
            });
        }
        let mut traj = Trajectory::with_capacity(0);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if values.len() != ncols {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {ncols} fields, found {}", values.len()),
                });
            }
            let block = |b: usize| DVector::from_column_slice(&values[1 + b * n..1 + (b + 1) * n]);
            traj.times.push(values[0]);
            traj.x.push(block(0));
            traj.xhat.push(block(1));
            traj.what.push(block(2));
            traj.u.push(block(3));
            traj.w_true.push(block(4));
        }
        Ok(traj)
    }
}

/// Integrates the closed loop from `init` and records every
/// `sample_every`-th step, always including the first and last.
pub fn simulate(
    cfg: &ControllerConfig,
    gm: &GraphMatrices,
    d: &DisturbanceSignal,
    init: &LoopState,
    settings: &SimSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    let lp = ClosedLoop::new(cfg, gm)?;
    let n = gm.n();
    if d.n() != n {
        return Err(Error::DimensionMismatch {
            what: "disturbance",
            expected: n,
            found: d.n(),
        });
    }
    if init.n() != n || init.xhat.len() != n || init.what.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            found: init.n(),
        });
    }
    if !init.is_finite() {
        return Err(Error::NonFiniteState { time: 0.0 });
    }

    let steps = settings.steps();
    let h = settings.step;
    let mut traj = Trajectory::with_capacity(steps / settings.sample_every + 2);
    let mut s = init.clone();
    traj.push(0.0, &s, lp.control_input(&s)?, d.evaluate(0.0));
    for k in 0..steps {
        let t = k as f64 * h;
        s = rk4_step(&lp, &s, d, t, h)?;
        let done = k + 1;
        if done % settings.sample_every == 0 || done == steps {
            let t_next = done as f64 * h;
            traj.push(t_next, &s, lp.control_input(&s)?, d.evaluate(t_next));
        }
    }
    Ok(traj)
}
