//! Distributed consensus and formation control of single-integrator agents
//! under unknown persistent disturbances.
//!
//! Each agent runs the standard Laplacian consensus input plus an integral
//! disturbance estimate driven by the error between its state and a local
//! state predictor, projected through the neighbor-computable matrix
//! `Q = S·L`. The crate builds the graph matrices, simulates every closed-loop
//! variant with a fixed-step RK4 integrator, and numerically checks the
//! stability statements behind the controller, such as inertia counts and
//! ultimate bounds.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod scenario;
pub mod sim;
pub mod spectral;
pub mod verify;

pub use analysis::ConvergenceReport;
pub use controller::{ClosedLoop, ControllerConfig, LoopState, Mode};
pub use error::{Error, Result};
pub use graph::{Graph, GraphMatrices};
pub use scenario::{builtin_example, Scenario, Variant};
pub use sim::{simulate, DisturbanceSignal, SimSettings, Trajectory};
pub use spectral::{AssumptionReport, BoundReport, InertiaReport};
