//! Solver results, per-height reports and the standalone task functions.

use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::coupled::{center_of_pressure, static_torques, CoupledConfiguration, CoupledSystem};
use crate::ergo::ipm::{solve, IpStatus, Nlp};
use crate::ergo::problem::{ErgoProblem, TaskValues};
use crate::error::{Error, Result};
use crate::kinematics::com_height_null_config;
use crate::model::{HardwareParams, Model};
use crate::spatial::Wrench;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    /// No feasible point was found; `family` is the worst constraint family.
    Infeasible { family: String, violation: f64 },
}

impl Status {
    pub fn is_converged(&self) -> bool {
        matches!(self, Status::Converged)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Converged => write!(f, "converged"),
            Status::MaxIterations => write!(f, "max-iter"),
            Status::Infeasible { family, violation } => write!(f, "infeasible ({family}, violation {violation:.3e})"),
        }
    }
}

/// Contact wrench applied to an agent, world-aligned, at the contact point.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactReport {
    pub label: String,
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

/// Statics of one target height at the solution.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightReport {
    pub height: f64,
    pub configuration: CoupledConfiguration,
    pub human_torque: DVector<f64>,
    pub robot_torque: DVector<f64>,
    pub contacts: Vec<ContactReport>,
    /// Human left, human right, robot left, robot right, in sole frames.
    pub cop: [Vector2<f64>; 4],
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: DVector<f64>,
    pub hardware: HardwareParams,
    pub heights: Vec<HeightReport>,
    pub tasks: Option<TaskValues>,
    pub objective: f64,
    pub violation: f64,
    pub kkt_error: f64,
    pub iterations: usize,
    pub status: Status,
}

impl ErgoProblem {
    /// Solves from the seeded warm start.
    pub fn solve(&self) -> Result<Solution> {
        self.solve_from(&self.warm_start())
    }

    pub fn solve_from(&self, x0: &DVector<f64>) -> Result<Solution> {
        if x0.len() != self.num_variables() {
            return Err(Error::InvalidScenario(format!(
                "warm start has {} entries, expected {}",
                x0.len(),
                self.num_variables()
            )));
        }
        let r = solve(self, x0, &self.spec.solver.ip())?;
        let status = match r.status {
            IpStatus::Converged => Status::Converged,
            IpStatus::MaxIterations => Status::MaxIterations,
            IpStatus::Infeasible { family, violation } => Status::Infeasible { family, violation },
        };
        let heights = if status == Status::Converged { self.reports(&r.x)? } else { Vec::new() };
        Ok(Solution {
            hardware: self.hardware(&r.x),
            tasks: self.tasks(&r.x).ok(),
            objective: r.objective,
            violation: r.violation,
            kkt_error: r.kkt_error,
            iterations: r.iterations,
            status,
            heights,
            x: r.x,
        })
    }

    /// Per-height statics at `x`.
    pub fn reports(&self, x: &DVector<f64>) -> Result<Vec<HeightReport>> {
        let dims = self.sys.dims();
        let labels: Vec<String> = self.sys.contacts().iter().map(|c| c.to_string()).collect();
        (0..self.layout.heights)
            .map(|k| {
                let s = self.height_statics(x, k)?;
                let w = &s.kkt.wrenches;
                let contacts = labels
                    .iter()
                    .enumerate()
                    .map(|(c, label)| ContactReport {
                        label: label.clone(),
                        force: Vector3::new(w[6 * c], w[6 * c + 1], w[6 * c + 2]),
                        torque: Vector3::new(w[6 * c + 3], w[6 * c + 4], w[6 * c + 5]),
                    })
                    .collect();
                Ok(HeightReport {
                    height: self.spec.heights[k],
                    configuration: self.configuration(x, k),
                    human_torque: s.kkt.tau.rows(0, dims.n[0]).into_owned(),
                    robot_torque: s.kkt.tau.rows(dims.n[0], dims.n[1]).into_owned(),
                    contacts,
                    cop: s.cop,
                })
            })
            .collect()
    }
}

/// `‖τ‖²` of the stacked human and robot static torques.
pub fn task_torque(sys: &CoupledSystem, q: &CoupledConfiguration) -> Result<f64> {
    Ok(static_torques(sys, q)?.norm_squared())
}

/// Sum over links of the product of distances to the preferable densities.
pub fn task_density(densities: &[f64], preferable: &[f64]) -> f64 {
    densities
        .iter()
        .map(|rho| preferable.iter().map(|p| (p - rho).abs()).product::<f64>())
        .sum()
}

/// Sum over feet of the squared CoP offset from `target`.
pub fn task_cop(feet: &[Wrench], target: Vector2<f64>) -> Result<f64> {
    feet.iter().map(|w| Ok((center_of_pressure(w)? - target).norm_squared())).sum()
}

/// `1/z²` of the center-of-mass height in the null configuration.
pub fn task_com_height(robot: &Model, params: &HardwareParams) -> Result<f64> {
    let z = com_height_null_config(robot, params)?;
    if !(z > 0.0) {
        return Err(Error::DegenerateModel(format!("center of mass height {z} is not positive")));
    }
    Ok(1.0 / (z * z))
}
