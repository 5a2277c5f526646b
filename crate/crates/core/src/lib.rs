//! Surplus-based average consensus on time-varying directed networks.
//!
//! Agents hold a state and a nonnegative surplus. States move toward lower
//! in-neighbours directly and upward only by spending surplus, while the
//! surplus absorbs every state change. The network total `Σ (x_i + s_i)` is
//! therefore invariant, and all states reach its average whenever the
//! topology is jointly strongly connected.
//!
//! - [`graph`]: digraphs, schedules, reachability and joint connectivity.
//! - [`protocol`]: the agent-level update and the parameter rules.
//! - [`matrix`]: the stacked matrix form, used as an oracle.
//! - [`analysis`]: Lyapunov function, distances and convergence checks.
//! - [`schedule`]: reference topologies and counterexample families.
//! - [`harness`]: configs, batch runs and output files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod matrix;
pub mod protocol;
mod rng;
pub mod schedule;

pub use analysis::{kappa_bound, lyapunov, Norm, TrajectoryMetrics};
pub use error::{Error, Result};
pub use graph::{Digraph, JointConnectivity, Node, TopologySchedule};
pub use matrix::UpdateMatrices;
pub use protocol::{
    run, run_with, step, step_baseline, Algorithm, NetworkState, Simulation, StepRecord,
    Trajectory, ValidationReport, WeightPolicy,
};
