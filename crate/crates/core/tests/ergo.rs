use ergodesign::ergo::ipm::Nlp;
use ergodesign::ergo::{
    task_com_height, task_cop, task_density, DerivativeMode, ErgoProblem, ScenarioSpec, Status, Weights,
};
use ergodesign::kinematics::chain_length;
use ergodesign::model::{Link, PrincipalAxis, Roles};
use ergodesign::shapes::{LinkHardware, Shape};
use ergodesign::spatial::{FrameTag, Rotation, Vec3, Wrench};
use ergodesign::templates::{desk_robot, human};
use ergodesign::{HardwareParams, Model};
use nalgebra::{DVector, Vector2};

fn problem(spec: ScenarioSpec) -> ErgoProblem {
    ErgoProblem::new(human(1.82), desk_robot(), spec).unwrap()
}

fn single(height: f64, frozen: bool) -> ScenarioSpec {
    ScenarioSpec {
        heights: vec![height],
        freeze_hardware: frozen,
        ..ScenarioSpec::default()
    }
}

fn ball(center_height: f64) -> Model {
    let r = 0.05;
    let link = Link {
        name: "ball".into(),
        shape: Shape::Sphere { r },
        hardware: LinkHardware {
            density: 1000.0,
            length_multiplier: 1.0,
        },
        axis: PrincipalAxis::PosZ,
        origin: Vec3::new(0.0, 0.0, center_height - r),
        group: Some("ball".into()),
    };
    Model::new("ball", vec![link], vec![], vec![], 0, Roles::default()).unwrap()
}

#[test]
fn density_task_examples() {
    assert_eq!(task_density(&[1500.0], &[1000.0, 2000.0]), 250000.0);
    assert_eq!(task_density(&[1240.0, 7850.0], &[1240.0, 2700.0, 7850.0]), 0.0);
    let a = task_density(&[900.0, 3100.0], &[1240.0, 2700.0, 7850.0]);
    let b = task_density(&[900.0, 3100.0], &[7850.0, 1240.0, 2700.0]);
    assert_eq!(a, b);
}

#[test]
fn cop_task_examples() {
    let sole = FrameTag::named("sole");
    let centred = Wrench::new(Vec3::new(0.0, 0.0, 300.0), Vec3::zeros(), sole.clone());
    assert_eq!(task_cop(&[centred.clone(), centred.clone()], Vector2::zeros()).unwrap(), 0.0);
    // CoP at x = 0.05 from τ_y = −0.05·f_z.
    let offset = Wrench::new(Vec3::new(0.0, 0.0, 300.0), Vec3::new(0.0, -15.0, 0.0), sole.clone());
    let t3 = task_cop(&[centred, offset], Vector2::zeros()).unwrap();
    assert!((t3 - 0.0025).abs() < 1e-15);
    let lifted = Wrench::new(Vec3::zeros(), Vec3::zeros(), sole);
    assert!(task_cop(&[lifted], Vector2::zeros()).is_err());
}

#[test]
fn com_task_examples() {
    let none = HardwareParams::new();
    assert!((task_com_height(&ball(1.0), &none).unwrap() - 1.0).abs() < 1e-12);
    assert!((task_com_height(&ball(0.5), &none).unwrap() - 4.0).abs() < 1e-12);
    assert!(task_com_height(&ball(-0.5), &none).is_err());
}

#[test]
fn com_task_decreases_with_leg_length() {
    let robot = desk_robot();
    let mut last = f64::INFINITY;
    for lm in [0.6, 0.8, 1.0, 1.3, 1.6, 2.0] {
        let p = HardwareParams::new().with("thigh", 2200.0, lm).with("shank", 2200.0, lm);
        let t4 = task_com_height(&robot, &p).unwrap();
        assert!(t4 < last, "t4 not decreasing at lm {lm}");
        last = t4;
    }
}

#[test]
fn problem_tasks_agree_with_standalone_tasks() {
    let p = problem(ScenarioSpec::default());
    let x = p.warm_start();
    let t = p.tasks(&x).unwrap();
    let densities: Vec<f64> = p
        .sys
        .agents[1]
        .links
        .iter()
        .filter_map(|l| {
            let g = l.group.as_ref()?;
            p.spec.optimized_groups.contains(g).then(|| p.hardware(&x).entries[g].density)
        })
        .collect();
    let expected = task_density(&densities, &p.spec.preferable_densities);
    assert!((t.density - expected).abs() <= 1e-9 * expected);
    let t4 = task_com_height(&p.sys.agents[1], &p.hardware(&x)).unwrap();
    assert!((t.com_height - t4).abs() <= 1e-12);
}

#[test]
fn decision_and_residual_dimensions() {
    let p = problem(ScenarioSpec::default());
    let n = p.sys.agents[0].dof() + p.sys.agents[1].dof() + 18;
    assert_eq!(p.num_variables(), 3 * n + 2 * 5);
    let x = p.warm_start();
    assert_eq!(p.constraint_residuals(&x, 0).len(), 22);
}

#[test]
fn residuals_vanish_at_the_projected_start() {
    let p = problem(ScenarioSpec {
        jitter: 0.0,
        ..ScenarioSpec::default()
    });
    let x = p.warm_start();
    for k in 0..3 {
        assert!(p.constraint_residuals(&x, k).amax() < 1e-9);
    }
}

#[test]
fn tilted_payload_residual() {
    let p = problem(single(1.0, true));
    let mut x = p.warm_start();
    let roll = p.layout.payload(0) + 3;
    x[roll] = std::f64::consts::FRAC_PI_2;
    let r = p.constraint_residuals(&x, 0);
    assert!((r[0] + 1.0).abs() < 1e-12);
}

#[test]
fn single_height_cost_without_hardware_terms() {
    let spec = ScenarioSpec {
        weights: Weights {
            density: 0.0,
            com_height: 0.0,
            ..Weights::default()
        },
        ..single(1.0, false)
    };
    let p = problem(spec);
    let x = p.warm_start();
    let (f, _) = p.evaluate(&x).unwrap();
    let t = p.tasks(&x).unwrap();
    let w = Weights::default();
    assert!((f - (w.torque * t.torque[0] + w.cop * t.cop[0])).abs() <= 1e-12 * f);
}

/// Swaps left and right: `y`, roll and yaw flip sign, limb joints swap.
fn mirror(p: &ErgoProblem, x: &DVector<f64>) -> DVector<f64> {
    let mut m = x.clone();
    let lay = p.layout;
    for k in 0..lay.heights {
        for a in 0..2 {
            let o = lay.agent(k, a);
            for i in [1, 3, 5] {
                m[o + i] = -x[o + i];
            }
            let model = &p.sys.agents[a];
            for (j, joint) in model.joints.iter().enumerate() {
                let twin = if let Some(rest) = joint.name.strip_prefix("l_") {
                    model.joint_index(&format!("r_{rest}")).unwrap()
                } else if let Some(rest) = joint.name.strip_prefix("r_") {
                    model.joint_index(&format!("l_{rest}")).unwrap()
                } else {
                    j
                };
                m[o + 6 + j] = x[o + 6 + twin];
            }
        }
        let o = lay.payload(k);
        for i in [1, 3, 5] {
            m[o + i] = -x[o + i];
        }
    }
    m
}

#[test]
fn mirrored_posture_has_the_same_cost() {
    let p = problem(ScenarioSpec {
        jitter: 0.02,
        ..ScenarioSpec::default()
    });
    let x = p.warm_start();
    let (f, c) = p.evaluate(&x).unwrap();
    let (fm, cm) = p.evaluate(&mirror(&p, &x)).unwrap();
    assert!((f - fm).abs() <= 1e-9 * f, "{f} vs {fm}");
    assert!((c.amax() - cm.amax()).abs() <= 1e-12);
}

#[test]
fn forward_derivatives_match_central_differences() {
    for seed in 0..4 {
        let p = problem(ScenarioSpec {
            seed,
            jitter: 0.05,
            ..ScenarioSpec::default()
        });
        let x = p.warm_start();
        let a = p.derivatives_with(&x, DerivativeMode::Forward).unwrap();
        let b = p.derivatives_with(&x, DerivativeMode::CentralDifferences).unwrap();
        assert!((&a.grad - &b.grad).amax() <= 1e-4 * b.grad.amax());
        for r in 0..a.jac.nrows() {
            let (ra, rb) = (a.jac.row(r), b.jac.row(r));
            assert!((ra - rb).amax() <= 1e-4 * rb.amax().max(1.0), "row {r}");
        }
    }
}

#[test]
fn frozen_hardware_converges_and_descends() {
    let p = problem(ScenarioSpec {
        jitter: 0.0,
        ..single(1.0, true)
    });
    let x0 = p.warm_start();
    assert!(p.residuals(&x0).amax() <= 1e-9);
    let (f0, _) = p.evaluate(&x0).unwrap();
    let s = p.solve_from(&x0).unwrap();
    assert_eq!(s.status, Status::Converged);
    assert!(s.violation <= 1e-6);
    assert!(s.objective <= f0);
    assert_eq!(s.hardware, p.hardware(&x0));
    assert_eq!(s.heights.len(), 1);
    let h = &s.heights[0];
    let total: f64 = h.contacts[..4].iter().map(|c| c.force[2]).sum();
    assert!((total - p.sys.total_mass() * 9.81).abs() < 1e-6 * total);
}

#[test]
fn uniform_weight_scaling_keeps_the_iterates() {
    let base = single(1.0, true);
    let scaled = ScenarioSpec {
        weights: base.weights.scaled(4.0),
        ..base.clone()
    };
    let a = problem(base).solve().unwrap();
    let b = problem(scaled).solve().unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert!((&a.x - &b.x).amax() <= 1e-12);
    assert!((b.objective - 4.0 * a.objective).abs() <= 1e-9 * b.objective);
}

#[test]
fn unreachable_height_is_infeasible() {
    let robot = desk_robot();
    let reach = chain_length(&robot, "l_sole", "l_grasp").unwrap();
    let h = reach + 0.1;
    let p = problem(ScenarioSpec {
        solver: ergodesign::ergo::SolverOptions {
            max_iter: 400,
            ..Default::default()
        },
        ..single(h, true)
    });
    let s = p.solve().unwrap();
    match s.status {
        Status::Infeasible { family, .. } => assert!(family.contains(&format!("at height {h} m")), "{family}"),
        other => panic!("expected infeasible, got {other}"),
    }
}

#[test]
fn reach_bound_exceeds_any_separation() {
    // The straight-line bound is at least the distance at any configuration.
    let robot = desk_robot();
    let reach = chain_length(&robot, "l_sole", "l_grasp").unwrap();
    let q = ergodesign::Configuration::new(Vec3::zeros(), Rotation::identity(), DVector::from_element(robot.dof(), 0.3));
    let (_, a) = ergodesign::kinematics::forward_kinematics(&robot, &q, "l_sole").unwrap();
    let (_, b) = ergodesign::kinematics::forward_kinematics(&robot, &q, "l_grasp").unwrap();
    assert!((a - b).norm() <= reach);
}
