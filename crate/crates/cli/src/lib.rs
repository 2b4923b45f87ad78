//! Commands behind the `ergodesign` binary.

pub mod compare;
pub mod report;

use std::path::Path;

use anyhow::Result;
use ergodesign::ergo::{ErgoProblem, ScenarioSpec, Solution, Status};
use ergodesign::io::Scenario;
use ergodesign::{apply_hardware, HardwareBounds, HardwareParams, Model};

use crate::report::{HeightRow, Report};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_MAX_ITER: i32 = 3;
pub const EXIT_BAD_INPUT: i32 = 64;
pub const EXIT_FAILURE: i32 = 70;

/// Files shipped with the tool.
pub mod assets {
    pub const DESK_ROBOT: &str = include_str!("../assets/desk-robot.toml");
    pub const DESK_SCENARIO: &str = include_str!("../assets/desk.toml");
    pub const TABLE_ORIGINAL: &str = include_str!("../assets/lifting/original.csv");
    pub const TABLE_OPTIMIZED: &str = include_str!("../assets/lifting/optimized.csv");
}

/// Command-line overrides of the scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub freeze_hardware: bool,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) {
        spec.freeze_hardware |= self.freeze_hardware;
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(m) = self.max_iter {
            spec.solver.max_iter = m;
        }
    }
}

pub struct Outcome {
    pub report: Report,
    /// The robot with the solved hardware, when the solve converged.
    pub model: Option<Model>,
    pub exit_code: i32,
}

impl Outcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.report.write(dir)?;
        if let Some(m) = &self.model {
            ergodesign::io::save_model(m, dir.join("optimized_model.toml"))?;
        }
        Ok(())
    }
}

fn exit_code(statuses: &[&Status]) -> i32 {
    if statuses.iter().any(|s| matches!(s, Status::Infeasible { .. })) {
        EXIT_INFEASIBLE
    } else if statuses.iter().any(|s| matches!(s, Status::MaxIterations)) {
        EXIT_MAX_ITER
    } else {
        EXIT_CONVERGED
    }
}

fn groups_of(robot: &Model, spec: &ScenarioSpec) -> HardwareParams {
    let all = robot.hardware();
    HardwareParams {
        entries: all
            .entries
            .into_iter()
            .filter(|(g, _)| spec.optimized_groups.contains(g))
            .collect(),
    }
}

fn joint_names(scenario: &Scenario) -> [Vec<String>; 2] {
    [&scenario.human, &scenario.robot].map(|m| m.joints.iter().map(|j| j.name.clone()).collect())
}

fn decision(p: &ErgoProblem, s: &Solution) -> Vec<(Option<f64>, Vec<f64>)> {
    let lay = p.layout;
    let mut out: Vec<(Option<f64>, Vec<f64>)> = (0..lay.heights)
        .map(|k| {
            let start = lay.height(k);
            (Some(p.spec.heights[k]), s.x.as_slice()[start..start + lay.per_height()].to_vec())
        })
        .collect();
    out.push((None, s.x.as_slice()[lay.hardware()..].to_vec()));
    out
}

/// Co-design over all scenario heights with shared hardware.
pub fn optimize(scenario: &Scenario, overrides: &Overrides) -> Result<Outcome> {
    let mut spec = scenario.spec.clone();
    overrides.apply(&mut spec);
    let p = ErgoProblem::new(scenario.human.clone(), scenario.robot.clone(), spec.clone())?;
    let s = p.solve()?;
    let rows = spec
        .heights
        .iter()
        .enumerate()
        .map(|(k, &h)| HeightRow {
            height: h,
            status: s.status.clone(),
            stats: s.heights.get(k).cloned(),
        })
        .collect();
    let model = if s.status.is_converged() {
        let wide = HardwareBounds {
            length_multiplier: (f64::MIN_POSITIVE, f64::MAX),
            density: (f64::MIN_POSITIVE, f64::MAX),
        };
        Some(apply_hardware(&scenario.robot, &s.hardware, &wide)?)
    } else {
        None
    };
    Ok(Outcome {
        report: Report {
            joints: joint_names(scenario),
            rows,
            hardware_before: groups_of(&scenario.robot, &spec),
            hardware_after: s.hardware.clone(),
            decision: decision(&p, &s),
        },
        model,
        exit_code: exit_code(&[&s.status]),
    })
}

/// Posture-only solves of a fixed robot design, one per height.
pub fn evaluate(robot: &Model, scenario: &Scenario, overrides: &Overrides) -> Result<Outcome> {
    let mut spec = scenario.spec.clone();
    overrides.apply(&mut spec);
    spec.freeze_hardware = true;
    let mut rows = Vec::new();
    let mut dec = Vec::new();
    for &h in &spec.heights {
        let single = ScenarioSpec {
            heights: vec![h],
            ..spec.clone()
        };
        let p = ErgoProblem::new(scenario.human.clone(), robot.clone(), single)?;
        let s = p.solve()?;
        let lay = p.layout;
        dec.push((Some(h), s.x.as_slice()[..lay.per_height()].to_vec()));
        rows.push(HeightRow {
            height: h,
            stats: s.heights.first().cloned(),
            status: s.status,
        });
    }
    let hw = groups_of(robot, &spec);
    let statuses: Vec<&Status> = rows.iter().map(|r| &r.status).collect();
    let exit_code = exit_code(&statuses);
    Ok(Outcome {
        report: Report {
            joints: joint_names(&Scenario {
                robot: robot.clone(),
                ..scenario.clone()
            }),
            rows,
            hardware_before: hw.clone(),
            hardware_after: hw,
            decision: dec,
        },
        model: None,
        exit_code,
    })
}

/// Exit code for an error raised while loading inputs or solving.
pub fn error_exit_code(e: &anyhow::Error) -> i32 {
    use ergodesign::Error as E;
    match e.downcast_ref::<E>() {
        Some(
            E::InvalidModel(_)
            | E::InvalidScenario(_)
            | E::InvalidShape(_)
            | E::InvalidHardware(_)
            | E::UnknownFrame(_)
            | E::UnknownLink(_)
            | E::OutOfBounds { .. }
            | E::Parse { .. }
            | E::Io { .. },
        ) => EXIT_BAD_INPUT,
        _ if e.downcast_ref::<csv::Error>().is_some() => EXIT_BAD_INPUT,
        _ => EXIT_FAILURE,
    }
}
