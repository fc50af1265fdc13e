//! Simulation and verification of distributed continuous-time tracking of a
//! time-varying constrained optimum.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod barrier;
pub mod cli;
pub mod config;
pub mod controller;
pub mod fd;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod report;
pub mod simulator;

pub use barrier::BarrierSchedule;
pub use graph::Graph;
pub use problem::{AgentProblem, BuiltinField, ProblemSet, TimeFn};
pub use simulator::{simulate, Scenario, Trajectory};
