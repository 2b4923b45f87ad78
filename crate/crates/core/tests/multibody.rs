use ergodesign::kinematics::{
    bias_forces, com_height_null_config, forward_kinematics, frame_jacobian, gravity_vector, inverse_dynamics,
    mass_matrix, Configuration, Kinematics, Mechanism,
};
use ergodesign::model::{Frame, Joint, JointKind, Link, Model, PrincipalAxis, Roles};
use ergodesign::shapes::{LinkHardware, Shape};
use ergodesign::spatial::{Mat3, Rotation, Vec3, GRAVITY};
use ergodesign::templates::{desk_robot, human};
use ergodesign::{apply_hardware, HardwareBounds, HardwareParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(model: &Model, rng: &mut ChaCha8Rng) -> Configuration {
    let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0));
    let r = Rotation::from_rpy(
        rng.random_range(-3.0..3.0),
        rng.random_range(-1.2..1.2),
        rng.random_range(-3.0..3.0),
    );
    let s = DVector::from_iterator(
        model.dof(),
        model.joints.iter().map(|j| rng.random_range(j.limits.0..=j.limits.1)),
    );
    Configuration::new(p, r, s)
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)))
}

fn rod(name: &str, len: f64) -> Link {
    Link {
        name: name.into(),
        shape: Shape::Cylinder { r: 0.01, h: len },
        hardware: LinkHardware {
            density: 1000.0,
            length_multiplier: 1.0,
        },
        axis: PrincipalAxis::PosX,
        origin: Vec3::zeros(),
        group: None,
    }
}

fn planar_2r() -> Model {
    let joint = |name: &str, parent, child, offset| Joint {
        name: name.into(),
        kind: JointKind::Revolute,
        parent,
        child,
        axis: Vec3::z(),
        offset,
        rotation: Mat3::identity(),
        limits: (-3.2, 3.2),
    };
    Model::new(
        "2r",
        vec![rod("base", 0.1), rod("upper", 1.0), rod("lower", 1.0)],
        vec![
            joint("j1", 0, 1, Vec3::zeros()),
            joint("j2", 1, 2, Vec3::new(1.0, 0.0, 0.0)),
        ],
        vec![Frame {
            name: "tip".into(),
            link: 2,
            offset: Vec3::new(1.0, 0.0, 0.0),
            rotation: Mat3::identity(),
        }],
        0,
        Roles::default(),
    )
    .unwrap()
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-12)
}

#[test]
fn base_frame_pose_is_the_base_state() {
    let m = desk_robot();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = random_config(&m, &mut rng);
    let (r, p) = forward_kinematics(&m, &q, "pelvis").unwrap();
    assert_eq!(p, q.base_position);
    assert!((r.matrix() - q.base_rotation).amax() < 1e-12);
    assert!(forward_kinematics(&m, &q, "nose").is_err());
}

#[test]
fn planar_arm_tip() {
    let m = planar_2r();
    let half = std::f64::consts::FRAC_PI_2;
    let q = Configuration::new(Vec3::zeros(), Rotation::identity(), DVector::from_vec(vec![half, half]));
    let (_, p) = forward_kinematics(&m, &q, "tip").unwrap();
    assert!((p - Vec3::new(-1.0, 1.0, 0.0)).norm() < 1e-12);
    let q0 = Configuration::neutral(2);
    let (r, p) = forward_kinematics(&m, &q0, "lower").unwrap();
    assert_eq!(p, Vec3::new(1.0, 0.0, 0.0));
    assert_eq!(*r.matrix(), Mat3::identity());
}

#[test]
fn link_scaling_moves_child_joint() {
    let m = planar_2r();
    let scaled = apply_hardware(&m, &HardwareParams::new().with("upper", 1000.0, 2.0), &HardwareBounds::default()).unwrap();
    assert_eq!(scaled.scaled_joint_offset(1), Vec3::new(2.0, 0.0, 0.0));
    let (_, p) = forward_kinematics(&scaled, &Configuration::neutral(2), "tip").unwrap();
    assert!((p - Vec3::new(3.0, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn density_leaves_kinematics_alone() {
    let m = desk_robot();
    let heavy = apply_hardware(&m, &HardwareParams::new().with("thigh", 7000.0, 1.0), &HardwareBounds::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = random_config(&m, &mut rng);
    for f in ["l_sole", "r_grasp", "head"] {
        assert_eq!(
            forward_kinematics(&m, &q, f).unwrap().1,
            forward_kinematics(&heavy, &q, f).unwrap().1
        );
    }
    assert!((mass_matrix(&m, &q) - mass_matrix(&heavy, &q)).amax() > 1e-3);
}

#[test]
fn identity_hardware_changes_nothing() {
    let m = desk_robot();
    let same = apply_hardware(&m, &m.hardware(), &HardwareBounds::default()).unwrap();
    assert_eq!(m, same);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = random_config(&m, &mut rng);
    assert_eq!(mass_matrix(&m, &q), mass_matrix(&same, &q));
    assert_eq!(gravity_vector(&m, &q), gravity_vector(&same, &q));
}

#[test]
fn total_mass_is_sum_of_shapes() {
    let m = desk_robot();
    let p = HardwareParams::new().with("thigh", 2700.0, 1.4).with("forearm", 7850.0, 0.7);
    let s = apply_hardware(&m, &p, &HardwareBounds::default()).unwrap();
    let by_shape: f64 = s
        .links
        .iter()
        .map(|l| ergodesign::shapes::shape_mass(&l.shape, &l.hardware).unwrap())
        .sum();
    let mech = Mechanism::<f64>::from_model(&s);
    assert!((mech.total_mass() - by_shape).abs() < 1e-12 * by_shape);
    let q = Configuration::neutral(s.dof());
    assert!((mass_matrix(&s, &q)[(0, 0)] - by_shape).abs() < 1e-9);
}

#[test]
fn out_of_bounds_hardware_is_rejected() {
    let m = desk_robot();
    let e = apply_hardware(&m, &HardwareParams::new().with("thigh", 2700.0, 2.5), &HardwareBounds::default());
    assert!(matches!(e, Err(ergodesign::Error::OutOfBounds { .. })));
    let e = apply_hardware(&m, &HardwareParams::new().with("tail", 2700.0, 1.0), &HardwareBounds::default());
    assert!(matches!(e, Err(ergodesign::Error::UnknownLink(_))));
}

#[test]
fn jacobian_matches_finite_differences() {
    let m = human(1.82);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let q = random_config(&m, &mut rng);
        let dnu = random_vec(m.dof() + 6, &mut rng);
        for f in ["l_grasp", "r_sole", "head"] {
            let j = frame_jacobian(&m, &q, f).unwrap();
            let eps = 1e-6;
            let (rp, pp) = forward_kinematics(&m, &q.integrate(&dnu, eps), f).unwrap();
            let (rm, pm) = forward_kinematics(&m, &q.integrate(&dnu, -eps), f).unwrap();
            let lin = (pp - pm) / (2.0 * eps);
            // ω from the skew part of Ṙ Rᵀ
            let rdot = (rp.matrix() - rm.matrix()) / (2.0 * eps);
            let (_, r0) = (0, forward_kinematics(&m, &q, f).unwrap().0);
            let w = rdot * r0.matrix().transpose();
            let fd = DVector::from_vec(vec![lin[0], lin[1], lin[2], w[(2, 1)], w[(0, 2)], w[(1, 0)]]);
            let an = &j * &dnu;
            assert!(rel_err(&fd, &an) < 1e-5, "{f}: {} {fd} {an}", rel_err(&fd, &an));
        }
    }
}

#[test]
fn base_jacobian_is_identity_and_tree_sparse() {
    let m = desk_robot();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random_config(&m, &mut rng);
    let j = frame_jacobian(&m, &q, "pelvis").unwrap();
    let mut expect = DMatrix::zeros(6, m.dof() + 6);
    expect.view_mut((0, 0), (6, 6)).fill_with_identity();
    assert_eq!(j, expect);
    let j = frame_jacobian(&m, &q, "l_grasp").unwrap();
    let support = m.support(m.link_index("l_hand").unwrap());
    for k in 0..m.dof() {
        let col = j.column(6 + k);
        assert_eq!(support.contains(&k), col.amax() > 0.0, "joint {}", m.joints[k].name);
    }
}

#[test]
fn mass_matrix_symmetric_positive_definite() {
    let m = human(1.82);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let q = random_config(&m, &mut rng);
        let mm = mass_matrix(&m, &q);
        assert!((&mm - mm.transpose()).amax() <= 1e-9);
        assert!(mm.clone().symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn kinetic_energy_matches_link_sum() {
    let m = desk_robot();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let q = random_config(&m, &mut rng);
        let nu = random_vec(m.dof() + 6, &mut rng);
        let mm = mass_matrix(&m, &q);
        let ke = 0.5 * nu.dot(&(&mm * &nu));
        let mech = Mechanism::<f64>::from_model(&m);
        let k = Kinematics::compute(&m, &mech, &q.lift());
        let mut sum = 0.0;
        for i in 0..m.links.len() {
            let jac = k.point_jacobian(&m, i, &k.com[i]);
            let v = jac * &nu;
            let vc = Vec3::new(v[0], v[1], v[2]);
            let w = Vec3::new(v[3], v[4], v[5]);
            let r = k.link_rotation[i];
            let ic = r * mech.inertia_com[i] * r.transpose();
            sum += 0.5 * mech.mass[i] * vc.norm_squared() + 0.5 * w.dot(&(ic * w));
        }
        assert!((ke - sum).abs() <= 1e-9 * sum, "{ke} vs {sum}");
    }
}

#[test]
fn single_body_mass_matrix_is_its_inertia() {
    let m = Model::new("block", vec![rod("block", 0.4)], vec![], vec![], 0, Roles::default()).unwrap();
    let q = Configuration::new(Vec3::zeros(), Rotation::identity(), DVector::zeros(0));
    let mm = mass_matrix(&m, &q);
    let l = &m.links[0];
    let s = ergodesign::shapes::shape_summary(&l.shape, &l.hardware).unwrap();
    let com = l.axis.shape_rotation() * s.com;
    let rot = l.axis.shape_rotation();
    let (_, expect) =
        ergodesign::spatial::assemble_spatial_inertia(s.mass, com, rot * s.inertia_com * rot.transpose() - s.mass * ergodesign::spatial::skew(&com) * ergodesign::spatial::skew(&com)).unwrap();
    let expect = DMatrix::from_column_slice(6, 6, expect.as_slice());
    assert!((mm - expect).amax() < 1e-12);
    let g = gravity_vector(&m, &q);
    assert!((g[2] - s.mass * GRAVITY).abs() < 1e-12);
    assert!((g[4] + s.mass * GRAVITY * com[0]).abs() < 1e-12);
}

fn potential(m: &Model, q: &Configuration) -> f64 {
    let mech = Mechanism::<f64>::from_model(m);
    let k = Kinematics::compute(m, &mech, &q.lift());
    k.com.iter().zip(&mech.mass).map(|(c, mi)| mi * GRAVITY * c[2]).sum()
}

#[test]
fn gravity_is_potential_gradient() {
    let m = human(1.82);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let q = random_config(&m, &mut rng);
        let g = gravity_vector(&m, &q);
        let n = m.dof() + 6;
        let eps = 1e-6;
        let fd = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                (potential(&m, &q.integrate(&e, eps)) - potential(&m, &q.integrate(&e, -eps))) / (2.0 * eps)
            }),
        );
        assert!(rel_err(&fd, &g) <= 1e-4, "{}", rel_err(&fd, &g));
    }
}

#[test]
fn weightless_limit_has_no_gravity() {
    let mut m = desk_robot();
    for l in m.links.iter_mut() {
        l.hardware.density = 1e-300;
    }
    let g = gravity_vector(&m, &Configuration::neutral(m.dof()));
    assert!(g.amax() < 1e-290);
}

#[test]
fn bias_at_rest_is_gravity() {
    let m = desk_robot();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let q = random_config(&m, &mut rng);
        let h = bias_forces(&m, &q, &DVector::zeros(m.dof() + 6));
        let g = gravity_vector(&m, &q);
        assert!(rel_err(&h, &g) < 1e-12);
    }
}

#[test]
fn inverse_dynamics_is_consistent_with_mass_matrix() {
    let m = desk_robot();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = m.dof() + 6;
    for _ in 0..10 {
        let q = random_config(&m, &mut rng);
        let nu = random_vec(n, &mut rng);
        let acc = random_vec(n, &mut rng);
        let h = bias_forces(&m, &q, &nu);
        let full = inverse_dynamics(&m, &q, &nu, &acc);
        let mm = mass_matrix(&m, &q);
        assert!(rel_err(&(full - &h), &(&mm * &acc)) < 1e-10);
        // Coriolis terms do no work beyond ½ νᵀ Ṁ ν.
        let eps = 1e-6;
        let mdot = (mass_matrix(&m, &q.integrate(&nu, eps)) - mass_matrix(&m, &q.integrate(&nu, -eps))) / (2.0 * eps);
        let g = gravity_vector(&m, &q);
        let lhs = nu.dot(&(h - g));
        let rhs = 0.5 * nu.dot(&(mdot * &nu));
        assert!((lhs - rhs).abs() < 1e-5 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn sphere_com_height() {
    let link = Link {
        name: "ball".into(),
        shape: Shape::Sphere { r: 0.2 },
        hardware: LinkHardware {
            density: 500.0,
            length_multiplier: 1.0,
        },
        axis: PrincipalAxis::PosZ,
        origin: Vec3::zeros(),
        group: Some("ball".into()),
    };
    let m = Model::new("ball", vec![link], vec![], vec![], 0, Roles::default()).unwrap();
    let h = com_height_null_config(&m, &HardwareParams::new().with("ball", 800.0, 1.5)).unwrap();
    assert!((h - 0.3).abs() < 1e-12);
}

#[test]
fn com_height_ignores_uniform_density_and_grows_with_legs() {
    let m = desk_robot();
    let base = com_height_null_config(&m, &HardwareParams::new()).unwrap();
    let mut all = HardwareParams::new();
    for g in m.groups() {
        all = all.with(g, 4400.0, 1.0);
    }
    let mut dense = apply_hardware(&m, &all, &HardwareBounds::default()).unwrap();
    for l in dense.links.iter_mut() {
        l.hardware.density = 4400.0;
    }
    let h2 = com_height_null_config(&dense, &HardwareParams::new()).unwrap();
    assert!((h2 - base).abs() < 1e-12);
    let mut prev = base;
    for lm in [1.1, 1.3, 1.6, 2.0] {
        let p = HardwareParams::new().with("thigh", 2200.0, lm).with("shank", 2200.0, lm);
        let h = com_height_null_config(&m, &p).unwrap();
        assert!(h > prev);
        prev = h;
    }
}
