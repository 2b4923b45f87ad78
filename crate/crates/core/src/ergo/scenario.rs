//! Collaborative lifting scenario settings.

use serde::{Deserialize, Serialize};

use crate::ergo::ipm::IpOptions;
use crate::error::{Error, Result};
use crate::model::HardwareBounds;
use crate::templates::PayloadDims;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub torque: f64,
    pub density: f64,
    pub cop: f64,
    pub com_height: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            torque: 1.0,
            density: 1e-8,
            cop: 1e2,
            com_height: 1e1,
        }
    }
}

impl Weights {
    pub fn scaled(self, k: f64) -> Self {
        Self {
            torque: self.torque * k,
            density: self.density * k,
            cop: self.cop * k,
            com_height: self.com_height * k,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    Forward,
    CentralDifferences,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub constr_tol: f64,
    pub mu_init: f64,
    pub derivatives: DerivativeMode,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let ip = IpOptions::default();
        Self {
            max_iter: ip.max_iter,
            tol: ip.tol,
            constr_tol: ip.constr_tol,
            mu_init: ip.mu_init,
            derivatives: DerivativeMode::default(),
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn ip(&self) -> IpOptions {
        IpOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            constr_tol: self.constr_tol,
            mu_init: self.mu_init,
            verbose: self.verbose,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadSpec {
    /// Extents along x, y, z (m).
    pub size: [f64; 3],
    pub mass: f64,
    pub grasp_half_width: f64,
}

impl Default for PayloadSpec {
    fn default() -> Self {
        let d = PayloadDims::default();
        Self {
            size: [d.size.0, d.size.1, d.size.2],
            mass: d.mass,
            grasp_half_width: d.grasp_half_width,
        }
    }
}

impl PayloadSpec {
    pub fn dims(&self) -> PayloadDims {
        PayloadDims {
            size: (self.size[0], self.size[1], self.size[2]),
            mass: self.mass,
            grasp_half_width: self.grasp_half_width,
        }
    }
}

/// Everything the optimizer needs besides the two agent models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Target payload heights (m), ascending.
    pub heights: Vec<f64>,
    pub payload: PayloadSpec,
    /// Preferred material densities (kg/m³).
    pub preferable_densities: Vec<f64>,
    /// Desired center of pressure in each sole frame (m).
    pub cop_target: [f64; 2],
    pub weights: Weights,
    pub bounds: HardwareBounds,
    /// Robot parameter groups that are optimized.
    pub optimized_groups: Vec<String>,
    /// Keep the robot hardware at its nominal values.
    pub freeze_hardware: bool,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Amplitude of the seeded warm-start perturbation.
    pub jitter: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            heights: vec![0.8, 1.0, 1.2],
            payload: PayloadSpec::default(),
            preferable_densities: vec![1240.0, 2700.0, 7850.0],
            cop_target: [0.0, 0.0],
            weights: Weights::default(),
            bounds: HardwareBounds::default(),
            optimized_groups: ["torso", "upper_arm", "forearm", "thigh", "shank"].map(String::from).to_vec(),
            freeze_hardware: false,
            solver: SolverOptions::default(),
            seed: 0,
            jitter: 1e-3,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.into()));
        if self.heights.is_empty() {
            return bad("at least one target height is required");
        }
        if self.heights.iter().any(|h| !(*h > 0.0)) {
            return bad("heights must be positive");
        }
        if self.heights.windows(2).any(|w| w[0] >= w[1]) {
            return bad("heights must be sorted ascending without repeats");
        }
        let w = &self.weights;
        if [w.torque, w.density, w.cop, w.com_height].iter().any(|v| !(*v >= 0.0)) {
            return bad("weights must be nonnegative");
        }
        if self.preferable_densities.is_empty() {
            return bad("at least one preferable density is required");
        }
        if self.payload.size.iter().any(|v| !(*v > 0.0)) || !(self.payload.mass > 0.0) {
            return bad("payload size and mass must be positive");
        }
        let b = &self.bounds;
        if !(b.length_multiplier.0 > 0.0 && b.length_multiplier.0 <= b.length_multiplier.1) {
            return bad("length multiplier bounds must be positive and ordered");
        }
        if !(b.density.0 > 0.0 && b.density.0 <= b.density.1) {
            return bad("density bounds must be positive and ordered");
        }
        if self.optimized_groups.is_empty() && !self.freeze_hardware {
            return bad("no optimized parameter groups");
        }
        Ok(())
    }
}
