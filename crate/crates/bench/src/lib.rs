//! Fixtures shared by the benchmarks.

use ergodesign::ergo::{ErgoProblem, ScenarioSpec};
use ergodesign::templates::{desk_robot, human};

/// The desk lifting problem at the default heights, warm-started.
pub fn desk_problem(freeze_hardware: bool) -> (ErgoProblem, nalgebra::DVector<f64>) {
    let spec = ScenarioSpec {
        freeze_hardware,
        ..ScenarioSpec::default()
    };
    let p = ErgoProblem::new(human(1.82), desk_robot(), spec).expect("bundled scenario is valid");
    let x = p.warm_start();
    (p, x)
}
