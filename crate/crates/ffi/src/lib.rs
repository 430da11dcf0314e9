//! C ABI over `consensus-core`.
//!
//! Every function returns a [`ConsensusStatus`]; on anything other than
//! `CONSENSUS_STATUS_OK` a message is available from
//! [`consensus_last_error_message`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_parse`/`consensus_simulate` and released by
//! the matching `*_free`. Pointer arguments must be null or valid for the
//! access described; null is reported as `CONSENSUS_STATUS_NULL_POINTER`.
//! Strings returned through `char **` are owned by the caller and released
//! with [`consensus_string_free`].
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use consensus_core::analysis::ConvergenceReport;
use consensus_core::graph::{Graph, GraphMatrices};
use consensus_core::scenario::{builtin_example, Scenario, Variant};
use consensus_core::sim::Trajectory;
use consensus_core::spectral::{classify_error_system, error_system_matrix, inertia_of_kq, InertiaReport};
use consensus_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusVariant {
    Baseline = 0,
    Reject = 1,
    ConstantPoint = 2,
}

/// Per-sample vector selected by [`consensus_trajectory_sample`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusChannel {
    X = 0,
    Xhat = 1,
    What = 2,
    U = 3,
    W = 4,
}

/// `(π₊, π₋, π₀)` of a matrix spectrum.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConsensusInertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

pub struct ConsensusGraph {
    graph: Graph,
    matrices: GraphMatrices,
}

pub struct ConsensusScenario {
    scenario: Scenario,
}

pub struct ConsensusTrajectory {
    trajectory: Trajectory,
    report: ConvergenceReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(ConsensusStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => ConsensusStatus::Parse,
            Error::Io(_) => ConsensusStatus::Io,
            e if e.is_numerical() => ConsensusStatus::Numerical,
            _ => ConsensusStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ConsensusStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            ConsensusStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            ConsensusStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ConsensusStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ConsensusStatus::InvalidArgument, msg.into())
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    let slot = as_mut(out, what)?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let slot = as_mut(out, "out")?;
    *slot = CString::new(s).map_err(|_| invalid("string contains nul"))?.into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn inertia(r: &InertiaReport) -> ConsensusInertia {
    let (positive, negative, zero) = r.counts();
    ConsensusInertia {
        positive,
        negative,
        zero,
    }
}

/// Message for the most recent failed call on this thread, or an empty
/// string. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn consensus_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static, nul-terminated name of a status code.
#[no_mangle]
pub extern "C" fn consensus_status_name(status: ConsensusStatus) -> *const c_char {
    let s: &'static CStr = match status {
        ConsensusStatus::Ok => c"ok",
        ConsensusStatus::NullPointer => c"null pointer",
        ConsensusStatus::InvalidArgument => c"invalid argument",
        ConsensusStatus::Parse => c"parse error",
        ConsensusStatus::Validation => c"validation error",
        ConsensusStatus::Numerical => c"numerical failure",
        ConsensusStatus::Io => c"i/o error",
        ConsensusStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

#[no_mangle]
pub unsafe extern "C" fn consensus_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `edges` holds `edge_count` pairs as `2 * edge_count` zero-based indices.
#[no_mangle]
pub unsafe extern "C" fn consensus_graph_new(
    n: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut ConsensusGraph,
) -> ConsensusStatus {
    guard(|| {
        let len = edge_count
            .checked_mul(2)
            .ok_or_else(|| invalid("edge_count overflows"))?;
        let flat = slice(edges, len, "edges")?;
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let graph = Graph::new(n, &pairs)?;
        let matrices = GraphMatrices::new(&graph)?;
        put(out, ConsensusGraph { graph, matrices }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_graph_cycle(n: usize, out: *mut *mut ConsensusGraph) -> ConsensusStatus {
    guard(|| {
        let graph = Graph::cycle(n)?;
        let matrices = GraphMatrices::new(&graph)?;
        put(out, ConsensusGraph { graph, matrices }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_graph_free(g: *mut ConsensusGraph) {
    free(g);
}

#[no_mangle]
pub unsafe extern "C" fn consensus_graph_node_count(g: *const ConsensusGraph, out: *mut usize) -> ConsensusStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(g, "graph")?.graph.n();
        Ok(())
    })
}

/// Second-smallest Laplacian eigenvalue.
#[no_mangle]
pub unsafe extern "C" fn consensus_graph_fiedler_value(g: *const ConsensusGraph, out: *mut f64) -> ConsensusStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(g, "graph")?.matrices.fiedler_value();
        Ok(())
    })
}

/// Inertia of `K·Q` for `K = diag(k)`, `k` of length `n`.
#[no_mangle]
pub unsafe extern "C" fn consensus_kq_inertia(
    g: *const ConsensusGraph,
    k: *const f64,
    k_len: usize,
    out: *mut ConsensusInertia,
) -> ConsensusStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        let r = inertia_of_kq(slice(k, k_len, "k")?, &g.matrices)?;
        *as_mut(out, "out")? = inertia(&r);
        Ok(())
    })
}

/// Inertia of the `2n × 2n` predictor/estimator error matrix.
#[no_mangle]
pub unsafe extern "C" fn consensus_error_system_inertia(
    g: *const ConsensusGraph,
    k: *const f64,
    k_len: usize,
    m: f64,
    q: f64,
    out: *mut ConsensusInertia,
) -> ConsensusStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        let a = error_system_matrix(&g.matrices, slice(k, k_len, "k")?, m, q)?;
        *as_mut(out, "out")? = inertia(&classify_error_system(&a)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_parse(
    text: *const c_char,
    out: *mut *mut ConsensusScenario,
) -> ConsensusStatus {
    guard(|| {
        let scenario = Scenario::parse(string(text, "text")?)?;
        put(out, ConsensusScenario { scenario }, "out")
    })
}

/// Built-in example 1, 2 or 3.
#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_example(id: u32, out: *mut *mut ConsensusScenario) -> ConsensusStatus {
    guard(|| {
        put(
            out,
            ConsensusScenario {
                scenario: builtin_example(id)?,
            },
            "out",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_free(s: *mut ConsensusScenario) {
    free(s);
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_render(
    s: *const ConsensusScenario,
    out: *mut *mut c_char,
) -> ConsensusStatus {
    guard(|| put_string(out, as_ref(s, "scenario")?.scenario.render()))
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_apply_variant(
    s: *mut ConsensusScenario,
    variant: ConsensusVariant,
) -> ConsensusStatus {
    guard(|| {
        let s = as_mut(s, "scenario")?;
        let v = match variant {
            ConsensusVariant::Baseline => Variant::Baseline,
            ConsensusVariant::Reject => Variant::Reject,
            ConsensusVariant::ConstantPoint => Variant::ConstantPoint,
        };
        s.scenario = s.scenario.clone().with_variant(v);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_set_horizon(s: *mut ConsensusScenario, horizon: f64) -> ConsensusStatus {
    guard(|| {
        let s = as_mut(s, "scenario")?;
        let mut next = s.scenario.clone();
        next.sim.horizon = horizon;
        next.sim.validate()?;
        s.scenario = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_set_step(s: *mut ConsensusScenario, step: f64) -> ConsensusStatus {
    guard(|| {
        let s = as_mut(s, "scenario")?;
        let mut next = s.scenario.clone();
        next.sim.step = step;
        next.sim.validate()?;
        s.scenario = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_scenario_node_count(
    s: *const ConsensusScenario,
    out: *mut usize,
) -> ConsensusStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(s, "scenario")?.scenario.n();
        Ok(())
    })
}

/// Runs the scenario and analyzes the result.
#[no_mangle]
pub unsafe extern "C" fn consensus_simulate(
    s: *const ConsensusScenario,
    out: *mut *mut ConsensusTrajectory,
) -> ConsensusStatus {
    guard(|| {
        let run = as_ref(s, "scenario")?.scenario.run()?;
        put(
            out,
            ConsensusTrajectory {
                trajectory: run.trajectory,
                report: run.report,
            },
            "out",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_free(t: *mut ConsensusTrajectory) {
    free(t);
}

/// Number of retained samples.
#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_len(t: *const ConsensusTrajectory, out: *mut usize) -> ConsensusStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(t, "trajectory")?.trajectory.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_node_count(
    t: *const ConsensusTrajectory,
    out: *mut usize,
) -> ConsensusStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(t, "trajectory")?.trajectory.n();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_time(
    t: *const ConsensusTrajectory,
    index: usize,
    out: *mut f64,
) -> ConsensusStatus {
    guard(|| {
        let tr = &as_ref(t, "trajectory")?.trajectory;
        let time = *tr
            .times
            .get(index)
            .ok_or_else(|| invalid(format!("sample {index} of {}", tr.len())))?;
        *as_mut(out, "out")? = time;
        Ok(())
    })
}

/// Copies one channel of sample `index` into `buf`, which must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_sample(
    t: *const ConsensusTrajectory,
    channel: ConsensusChannel,
    index: usize,
    buf: *mut f64,
    buf_len: usize,
) -> ConsensusStatus {
    guard(|| {
        let tr = &as_ref(t, "trajectory")?.trajectory;
        let rows = match channel {
            ConsensusChannel::X => &tr.x,
            ConsensusChannel::Xhat => &tr.xhat,
            ConsensusChannel::What => &tr.what,
            ConsensusChannel::U => &tr.u,
            ConsensusChannel::W => &tr.w_true,
        };
        let row = rows
            .get(index)
            .ok_or_else(|| invalid(format!("sample {index} of {}", tr.len())))?;
        if buf_len != row.len() {
            return Err(invalid(format!(
                "buffer holds {buf_len} values, sample has {}",
                row.len()
            )));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, buf_len).copy_from_slice(row.as_slice());
        Ok(())
    })
}

/// Writes the trajectory CSV atomically.
#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_write_csv(
    t: *const ConsensusTrajectory,
    path: *const c_char,
) -> ConsensusStatus {
    guard(|| {
        let tr = as_ref(t, "trajectory")?;
        tr.trajectory.write_csv(Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Convergence report as a flat JSON object.
#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_report_json(
    t: *const ConsensusTrajectory,
    out: *mut *mut c_char,
) -> ConsensusStatus {
    guard(|| put_string(out, as_ref(t, "trajectory")?.report.to_json()))
}

/// `max(x(T)) − min(x(T))`
#[no_mangle]
pub unsafe extern "C" fn consensus_trajectory_spread_final(
    t: *const ConsensusTrajectory,
    out: *mut f64,
) -> ConsensusStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(t, "trajectory")?.report.spread_final;
        Ok(())
    })
}
