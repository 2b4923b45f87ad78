//! The co-design nonlinear program and its solver.

pub mod ipm;
pub mod problem;
pub mod scenario;
pub mod solution;

pub use problem::{ErgoProblem, Layout, TaskValues};
pub use scenario::{DerivativeMode, PayloadSpec, ScenarioSpec, SolverOptions, Weights};
pub use solution::{task_com_height, task_cop, task_density, task_torque, ContactReport, HeightReport, Solution, Status};
