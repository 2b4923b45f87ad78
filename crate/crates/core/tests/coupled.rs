use ergodesign::coupled::{
    center_of_pressure, composite_matrices, contact_wrenches, coupling_matrix, evaluate_statics, nullspace_projector,
    pseudo_inverse, static_torques, CoupledConfiguration, CoupledSystem, StaticsKkt,
};
use ergodesign::ergo::{ErgoProblem, ScenarioSpec};
use ergodesign::kinematics::{frame_jacobian, gravity_vector, mass_matrix, Configuration};
use ergodesign::model::{Joint, JointKind, Link, Model, PrincipalAxis, Roles};
use ergodesign::shapes::{LinkHardware, Shape};
use ergodesign::spatial::{FrameTag, Mat3, Rotation, Vec3, Wrench, WrenchTransform, GRAVITY};
use ergodesign::templates::{desk_robot, human};
use ergodesign::{apply_hardware, Error, HardwareBounds, HardwareParams};
use nalgebra::{DMatrix, DVector};

fn desk_problem(seed: u64, jitter: f64) -> ErgoProblem {
    let spec = ScenarioSpec {
        seed,
        jitter,
        ..ScenarioSpec::default()
    };
    ErgoProblem::new(human(1.82), desk_robot(), spec).unwrap()
}

/// Desk configurations near the constraint manifold, one per height and seed.
fn desk_configurations(count: usize) -> Vec<(CoupledSystem, CoupledConfiguration)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let p = desk_problem(seed, 0.05);
        let x = p.warm_start();
        for k in 0..p.layout.heights {
            out.push((p.sys.clone(), p.configuration(&x, k)));
        }
        seed += 1;
    }
    out.truncate(count);
    out
}

#[test]
fn equilibrium_holds_on_desk_configurations() {
    for (sys, q) in desk_configurations(12) {
        let (m, g, b) = composite_matrices(&sys, &q);
        let qm = coupling_matrix(&sys, &q);
        let n = nullspace_projector(&m, &qm, None).unwrap();
        let tau = static_torques(&sys, &q).unwrap();
        let f = contact_wrenches(&sys, &q, &tau).unwrap();
        let projected = &n * (&g - &b * &tau);
        assert!(projected.amax() <= 1e-6, "projected residual {}", projected.amax());
        let full = &b * &tau + qm.transpose() * &f - &g;
        assert!(full.amax() <= 1e-6, "equilibrium residual {}", full.amax());
    }
}

#[test]
fn vertical_ground_forces_carry_total_weight() {
    for (sys, q) in desk_configurations(6) {
        let r = evaluate_statics(&sys, &q).unwrap();
        let support: f64 = (0..4).map(|c| r.wrenches[6 * c + 2]).sum();
        let weight = sys.total_mass() * GRAVITY;
        assert!((support - weight).abs() <= 1e-6 * weight, "{support} vs {weight}");
    }
}

#[test]
fn grasp_wrenches_balance_the_payload() {
    for (sys, q) in desk_configurations(6) {
        let r = evaluate_statics(&sys, &q).unwrap();
        let mut force = Vec3::zeros();
        for c in 4..8 {
            force += Vec3::new(r.wrenches[6 * c], r.wrenches[6 * c + 1], r.wrenches[6 * c + 2]);
        }
        let weight = sys.payload.total_mass() * GRAVITY;
        let expected = Vec3::new(0.0, 0.0, -weight);
        assert!((force - expected).amax() <= 1e-6 * weight, "{force:?}");
    }
}

#[test]
fn saddle_point_and_projector_routes_agree() {
    for (sys, q) in desk_configurations(6) {
        let (_, g, _) = composite_matrices(&sys, &q);
        let qm = coupling_matrix(&sys, &q);
        let kkt = StaticsKkt::solve(sys.dims(), &qm, &g, None).unwrap();
        let tau = static_torques(&sys, &q).unwrap();
        let f = contact_wrenches(&sys, &q, &tau).unwrap();
        let scale = tau.amax().max(1.0);
        assert!((&kkt.tau - &tau).amax() <= 1e-7 * scale);
        assert!((&kkt.wrenches - &f).amax() <= 1e-6 * f.amax());
    }
}

#[test]
fn projector_is_idempotent_and_annihilates_constraints() {
    for (sys, q) in desk_configurations(3) {
        let (m, _, _) = composite_matrices(&sys, &q);
        let qm = coupling_matrix(&sys, &q);
        let n = nullspace_projector(&m, &qm, None).unwrap();
        assert!((&n * &n - &n).amax() <= 1e-8);
        assert!((&n * qm.transpose()).amax() <= 1e-8);
    }
}

#[test]
fn empty_constraint_set_gives_identity_projector() {
    let m = DMatrix::<f64>::identity(7, 7) * 2.0;
    let q = DMatrix::<f64>::zeros(0, 7);
    assert_eq!(nullspace_projector(&m, &q, None).unwrap(), DMatrix::identity(7, 7));
}

#[test]
fn dependent_rows_are_named() {
    let m = DMatrix::<f64>::identity(4, 4);
    let q = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    match nullspace_projector(&m, &q, Some(&labels)) {
        Err(Error::SingularConstraint { rows }) => {
            assert!(rows.contains(&"c".to_string()));
            assert!(!rows.contains(&"b".to_string()));
        }
        other => panic!("expected a singular constraint, got {other:?}"),
    }
}

#[test]
fn composite_structure() {
    let (sys, q) = desk_configurations(1).pop().unwrap();
    let (m, g, b) = composite_matrices(&sys, &q);
    let dims = sys.dims();
    let nv = dims.n[0] + dims.n[1] + 18;
    assert_eq!(m.shape(), (nv, nv));
    assert_eq!(g.len(), nv);
    assert!((&m - m.transpose()).amax() <= 1e-9);
    assert!(m.clone().cholesky().is_some());
    let payload_rows = b.rows(dims.offset(2), 6);
    assert!(payload_rows.iter().all(|&v| v == 0.0));
    assert_eq!(coupling_matrix(&sys, &q).nrows(), 6 * 8);
}

#[test]
fn grasp_rows_vanish_for_a_common_rigid_motion() {
    let (sys, q) = desk_configurations(1).pop().unwrap();
    let dims = sys.dims();
    let v0 = Vec3::new(0.3, -0.2, 0.5);
    let w = Vec3::new(0.1, 0.4, -0.7);
    let mut nu = DVector::zeros(dims.velocity());
    let bases = [&q.agents[0], &q.agents[1], &q.payload];
    for (sub, c) in bases.iter().enumerate() {
        let o = dims.offset(sub);
        let pb = c.base_position;
        let lin = v0 + w.cross(&pb);
        nu.rows_mut(o, 3).copy_from(&lin);
        nu.rows_mut(o + 3, 3).copy_from(&w);
    }
    let qm = coupling_matrix(&sys, &q);
    let rows = &qm * &nu;
    assert!(rows.rows(24, 24).amax() <= 1e-12);
    assert!(rows.rows(0, 24).amax() > 1e-3);
}

#[test]
fn density_changes_keep_the_coupling_matrix() {
    let (sys, q) = desk_configurations(1).pop().unwrap();
    let params = HardwareParams::new().with("thigh", 700.0, 1.0).with("torso", 5000.0, 1.0);
    let heavy = sys.with_robot_hardware(&params, &HardwareBounds::default()).unwrap();
    assert_eq!(coupling_matrix(&sys, &q), coupling_matrix(&heavy, &q));
}

#[test]
fn symmetric_stance_gives_mirrored_torques() {
    let p = desk_problem(0, 0.0);
    let x = p.warm_start();
    let q = p.configuration(&x, 1);
    let r = evaluate_statics(&p.sys, &q).unwrap();
    let dims = p.sys.dims();
    for a in 0..2 {
        let model = &p.sys.agents[a];
        let tau = r.agent_torques(dims, a);
        for (j, joint) in model.joints.iter().enumerate() {
            if let Some(rest) = joint.name.strip_prefix("l_") {
                let k = model.joint_index(&format!("r_{rest}")).unwrap();
                let scale = tau.amax();
                assert!((tau[j] - tau[k]).abs() <= 1e-6 * scale, "{}: {} vs {}", joint.name, tau[j], tau[k]);
            }
        }
    }
}

fn point_pendulum() -> Model {
    let r: f64 = 0.01;
    let bob_density = 1.0 / (4.0 / 3.0 * std::f64::consts::PI * r.powi(3));
    let link = |name: &str, density: f64, origin: Vec3| Link {
        name: name.into(),
        shape: Shape::Sphere { r },
        hardware: LinkHardware {
            density,
            length_multiplier: 1.0,
        },
        axis: PrincipalAxis::PosX,
        origin,
        group: None,
    };
    Model::new(
        "pendulum",
        vec![
            link("pivot", 1000.0, Vec3::new(-r, 0.0, 0.0)),
            link("bob", bob_density, Vec3::new(1.0 - r, 0.0, 0.0)),
        ],
        vec![Joint {
            name: "swing".into(),
            kind: JointKind::Revolute,
            parent: 0,
            child: 1,
            axis: Vec3::y(),
            offset: Vec3::zeros(),
            rotation: Mat3::identity(),
            limits: (-3.0, 3.0),
        }],
        vec![],
        0,
        Roles::default(),
    )
    .unwrap()
}

fn projected_torques(m: &DMatrix<f64>, g: &DVector<f64>, q: &DMatrix<f64>) -> DVector<f64> {
    let nj = m.nrows() - 6;
    let mut b = DMatrix::zeros(m.nrows(), nj);
    b.view_mut((6, 0), (nj, nj)).fill_with_identity();
    let n = nullspace_projector(m, q, None).unwrap();
    pseudo_inverse(&(&n * &b)) * (&n * g)
}

#[test]
fn horizontal_pendulum_torque() {
    let model = point_pendulum();
    let q = Configuration::neutral(1);
    let m = mass_matrix(&model, &q);
    let g = gravity_vector(&model, &q);
    let tau = projected_torques(&m, &g, &DMatrix::zeros(0, 7));
    assert!((tau[0].abs() - GRAVITY).abs() < 1e-9, "{}", tau[0]);
    assert!((tau.norm_squared() - GRAVITY * GRAVITY).abs() < 1e-7);
}

#[test]
fn torques_scale_with_uniform_density() {
    let model = human(1.82);
    let q = Configuration::new(Vec3::new(0.0, 0.0, 1.0), Rotation::identity(), DVector::from_element(model.dof(), 0.1));
    let feet = |m: &Model| {
        let mut jac = DMatrix::zeros(12, m.dof() + 6);
        for (i, f) in ["l_sole", "r_sole"].into_iter().enumerate() {
            jac.view_mut((6 * i, 0), (6, m.dof() + 6)).copy_from(&frame_jacobian(m, &q, f).unwrap());
        }
        jac
    };
    let k = 1.7;
    let mut params = HardwareParams::new();
    for l in &model.links {
        params = params.with(l.name.clone(), l.hardware.density * k, 1.0);
    }
    let bounds = HardwareBounds {
        length_multiplier: (0.5, 2.0),
        density: (1.0, 1e5),
    };
    let heavy = apply_hardware(&model, &params, &bounds).unwrap();
    let t1 = projected_torques(&mass_matrix(&model, &q), &gravity_vector(&model, &q), &feet(&model));
    let t2 = projected_torques(&mass_matrix(&heavy, &q), &gravity_vector(&heavy, &q), &feet(&heavy));
    assert!((&t1 * k - &t2).amax() <= 1e-9 * t2.amax());
}

#[test]
fn centre_of_pressure_examples() {
    let sole = FrameTag::named("sole");
    let centred = Wrench::new(Vec3::new(0.0, 0.0, 100.0), Vec3::zeros(), sole.clone());
    assert_eq!(center_of_pressure(&centred).unwrap().as_slice(), &[0.0, 0.0]);
    let tilted = Wrench::new(Vec3::new(0.0, 0.0, 100.0), Vec3::new(0.0, -5.0, 0.0), sole.clone());
    assert!((center_of_pressure(&tilted).unwrap()[0] - 0.05).abs() < 1e-15);
    let lifted = Wrench::new(Vec3::new(0.0, 0.0, 0.5), Vec3::zeros(), sole.clone());
    assert!(matches!(center_of_pressure(&lifted), Err(Error::UnloadedFoot { .. })));
}

#[test]
fn moving_the_reference_point_shifts_the_cop() {
    let a = FrameTag::named("a");
    let b = FrameTag::named("b");
    let w = Wrench::new(Vec3::new(3.0, -2.0, 250.0), Vec3::new(4.0, -7.0, 1.0), a.clone());
    let d = 0.08;
    // Frame b sits at +d along x of frame a.
    let x = WrenchTransform::new(Rotation::identity(), Vec3::new(-d, 0.0, 0.0), a, b);
    let cop_a = center_of_pressure(&w).unwrap();
    let cop_b = center_of_pressure(&x.apply(&w)).unwrap();
    assert!((cop_b[0] - (cop_a[0] - d)).abs() < 1e-12);
    assert!((cop_b[1] - cop_a[1]).abs() < 1e-12);
}

#[test]
fn statics_report_cops_for_loaded_feet() {
    let (sys, q) = desk_configurations(1).pop().unwrap();
    let r = evaluate_statics(&sys, &q).unwrap();
    assert_eq!(r.cop.len(), 4);
    assert!(r.cop.iter().all(|c| c.is_some()));
}
