//! Kinematics and statics-level dynamics of a floating-base tree whose
//! geometry and inertia depend on hardware parameters.
//!
//! Velocities use the mixed representation: the base twist is
//! `(ṗ_B, ω_B)` with both parts expressed in the world frame, and Jacobians
//! map `ν = (ṗ_B, ω_B, ṡ)` to world-aligned linear/angular velocities of a
//! frame origin.

use nalgebra::{DMatrix, DVector, Matrix3, OMatrix, Vector3, U6, Dyn};

use crate::error::{Error, Result};
use crate::model::{apply_hardware, FrameRef, HardwareBounds, HardwareParams, JointKind, Model, PrincipalAxis};
use crate::scalar::Real;
use crate::shapes::closed_form;
use crate::spatial::{axis_angle, skew, Mat3, Rotation, Vec3, GRAVITY};

pub type Jacobian<T> = OMatrix<T, U6, Dyn>;

/// `q = (p_B, R_B, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration<T: Real = f64> {
    pub base_position: Vector3<T>,
    pub base_rotation: Matrix3<T>,
    pub joints: DVector<T>,
}

impl Configuration<f64> {
    pub fn new(base_position: Vec3, base_rotation: Rotation, joints: DVector<f64>) -> Self {
        Self {
            base_position,
            base_rotation: *base_rotation.matrix(),
            joints,
        }
    }

    pub fn neutral(dof: usize) -> Self {
        Self::new(Vec3::zeros(), Rotation::identity(), DVector::zeros(dof))
    }

    pub fn rotation(&self) -> Rotation {
        Rotation::orthonormalized(self.base_rotation)
    }

    /// `q ⊕ dt·ν` with the base rotation updated by the exponential map of
    /// the world-frame angular velocity.
    pub fn integrate(&self, nu: &DVector<f64>, dt: f64) -> Self {
        let v = Vec3::new(nu[0], nu[1], nu[2]);
        let w = Vec3::new(nu[3], nu[4], nu[5]);
        let r = if w.norm() > 0.0 {
            axis_angle(&(w / w.norm()), w.norm() * dt)
        } else {
            Mat3::identity()
        };
        Self {
            base_position: self.base_position + v * dt,
            base_rotation: r * self.base_rotation,
            joints: &self.joints + nu.rows(6, self.joints.len()) * dt,
        }
    }

    pub fn lift<T: Real>(&self) -> Configuration<T> {
        Configuration {
            base_position: self.base_position.map(T::c),
            base_rotation: self.base_rotation.map(T::c),
            joints: self.joints.map(T::c),
        }
    }
}

/// Effective geometry and inertia of a model under (possibly symbolic)
/// hardware parameters.
#[derive(Clone, Debug)]
pub struct Mechanism<T: Real> {
    pub mass: Vec<T>,
    /// Center of mass in the link frame.
    pub com: Vec<Vector3<T>>,
    /// Inertia about the center of mass, link axes.
    pub inertia_com: Vec<Matrix3<T>>,
    pub joint_offset: Vec<Vector3<T>>,
    pub joint_rotation: Vec<Matrix3<T>>,
    pub joint_axis: Vec<Vector3<T>>,
    pub frame_offset: Vec<Vector3<T>>,
    pub frame_rotation: Vec<Matrix3<T>>,
}

fn scale_generic<T: Real>(v: &Vec3, axis: PrincipalAxis, lm: T) -> Vector3<T> {
    let a = axis.unit();
    let along = v.dot(&a);
    v.map(T::c) + a.map(T::c) * ((lm - T::one()) * T::c(along))
}

impl<T: Real> Mechanism<T> {
    /// `length_multiplier[i]` and `density[i]` are per link.
    pub fn build(model: &Model, length_multiplier: &[T], density: &[T]) -> Self {
        let nl = model.links.len();
        assert_eq!(length_multiplier.len(), nl);
        assert_eq!(density.len(), nl);
        let mut mass = Vec::with_capacity(nl);
        let mut com = Vec::with_capacity(nl);
        let mut inertia_com = Vec::with_capacity(nl);
        for (i, link) in model.links.iter().enumerate() {
            let (m, c, d) = closed_form(&link.shape, length_multiplier[i], density[i]);
            let r = link.axis.shape_rotation().map(T::c);
            let o = scale_generic(&link.origin, link.axis, length_multiplier[i]);
            mass.push(m);
            com.push(o + r * c);
            inertia_com.push(r * Matrix3::from_diagonal(&d) * r.transpose());
        }
        let joint_offset = model
            .joints
            .iter()
            .map(|j| {
                let p = &model.links[j.parent];
                scale_generic(&j.offset, p.axis, length_multiplier[j.parent])
            })
            .collect();
        let frame_offset = model
            .frames
            .iter()
            .map(|f| scale_generic(&f.offset, model.links[f.link].axis, length_multiplier[f.link]))
            .collect();
        Self {
            mass,
            com,
            inertia_com,
            joint_offset,
            joint_rotation: model.joints.iter().map(|j| j.rotation.map(T::c)).collect(),
            joint_axis: model.joints.iter().map(|j| j.axis.map(T::c)).collect(),
            frame_offset,
            frame_rotation: model.frames.iter().map(|f| f.rotation.map(T::c)).collect(),
        }
    }

    /// Uses the hardware stored in the model.
    pub fn from_model(model: &Model) -> Self {
        let lm: Vec<T> = model.links.iter().map(|l| T::c(l.hardware.length_multiplier)).collect();
        let rho: Vec<T> = model.links.iter().map(|l| T::c(l.hardware.density)).collect();
        Self::build(model, &lm, &rho)
    }

    pub fn total_mass(&self) -> T {
        self.mass.iter().fold(T::zero(), |a, &m| a + m)
    }
}

/// World poses of all links for one configuration.
#[derive(Clone, Debug)]
pub struct Kinematics<T: Real> {
    pub base_position: Vector3<T>,
    pub link_rotation: Vec<Matrix3<T>>,
    pub link_position: Vec<Vector3<T>>,
    /// World joint axes.
    pub axis: Vec<Vector3<T>>,
    /// World joint origins.
    pub origin: Vec<Vector3<T>>,
    pub com: Vec<Vector3<T>>,
}

impl<T: Real> Kinematics<T> {
    pub fn compute(model: &Model, mech: &Mechanism<T>, q: &Configuration<T>) -> Self {
        let nl = model.links.len();
        let nj = model.joints.len();
        assert_eq!(q.joints.len(), nj, "joint vector has the wrong length");
        let mut rot = vec![Matrix3::<T>::identity(); nl];
        let mut pos = vec![Vector3::<T>::zeros(); nl];
        let mut axis = vec![Vector3::<T>::zeros(); nj];
        let mut origin = vec![Vector3::<T>::zeros(); nj];
        rot[model.base] = q.base_rotation;
        pos[model.base] = q.base_position;
        for &j in model.joint_order() {
            let jt = &model.joints[j];
            let rp = rot[jt.parent];
            let rj = rp * mech.joint_rotation[j];
            let pj = pos[jt.parent] + rp * mech.joint_offset[j];
            let a = rj * mech.joint_axis[j];
            axis[j] = a;
            origin[j] = pj;
            match jt.kind {
                JointKind::Revolute => {
                    rot[jt.child] = rj * axis_angle(&mech.joint_axis[j], q.joints[j]);
                    pos[jt.child] = pj;
                }
                JointKind::Prismatic => {
                    rot[jt.child] = rj;
                    pos[jt.child] = pj + a * q.joints[j];
                }
            }
        }
        let com = (0..nl).map(|i| pos[i] + rot[i] * mech.com[i]).collect();
        Self {
            base_position: q.base_position,
            link_rotation: rot,
            link_position: pos,
            axis,
            origin,
            com,
        }
    }

    pub fn frame_pose(&self, model: &Model, mech: &Mechanism<T>, f: FrameRef) -> (Matrix3<T>, Vector3<T>) {
        match f {
            FrameRef::Link(l) => (self.link_rotation[l], self.link_position[l]),
            FrameRef::Frame(i) => {
                let l = model.frames[i].link;
                let r = self.link_rotation[l];
                (r * mech.frame_rotation[i], self.link_position[l] + r * mech.frame_offset[i])
            }
        }
    }

    /// Mixed Jacobian of a point rigidly attached to `link`.
    pub fn point_jacobian(&self, model: &Model, link: usize, point: &Vector3<T>) -> Jacobian<T> {
        let n = model.dof();
        let mut jac = Jacobian::<T>::zeros(6 + n);
        for k in 0..3 {
            jac[(k, k)] = T::one();
            jac[(3 + k, 3 + k)] = T::one();
        }
        let r = point - self.base_position;
        // ω × r = −S(r) ω
        let sr = skew(&r);
        for a in 0..3 {
            for b in 0..3 {
                jac[(a, 3 + b)] = -sr[(a, b)];
            }
        }
        for j in model.support(link) {
            let a = self.axis[j];
            match model.joints[j].kind {
                JointKind::Revolute => {
                    let lin = a.cross(&(point - self.origin[j]));
                    for k in 0..3 {
                        jac[(k, 6 + j)] = lin[k];
                        jac[(3 + k, 6 + j)] = a[k];
                    }
                }
                JointKind::Prismatic => {
                    for k in 0..3 {
                        jac[(k, 6 + j)] = a[k];
                    }
                }
            }
        }
        jac
    }

    pub fn frame_jacobian(&self, model: &Model, mech: &Mechanism<T>, f: FrameRef) -> Jacobian<T> {
        let (_, p) = self.frame_pose(model, mech, f);
        self.point_jacobian(model, model.frame_link(f), &p)
    }

    /// Mass and mass-weighted center of every subtree, indexed by root link.
    fn subtree_moments(&self, model: &Model, mech: &Mechanism<T>) -> (Vec<T>, Vec<Vector3<T>>) {
        let nl = model.links.len();
        let mut m: Vec<T> = mech.mass.clone();
        let mut mc: Vec<Vector3<T>> = (0..nl).map(|i| self.com[i] * mech.mass[i]).collect();
        for &j in model.joint_order().iter().rev() {
            let jt = &model.joints[j];
            let (cm, cmc) = (m[jt.child], mc[jt.child]);
            m[jt.parent] += cm;
            mc[jt.parent] += cmc;
        }
        (m, mc)
    }

    /// Generalized gravity force `g(q, π)`: the `ν = 0` part of `h`, i.e.
    /// the gradient of the potential energy along `ν`.
    pub fn gravity(&self, model: &Model, mech: &Mechanism<T>) -> DVector<T> {
        let n = model.dof();
        let g = T::c(GRAVITY);
        let (m, mc) = self.subtree_moments(model, mech);
        let mut out = DVector::<T>::zeros(6 + n);
        let total = m[model.base];
        out[2] = total * g;
        // (Σ m c − M p_B) × (0, 0, g)
        let arm = mc[model.base] - self.base_position * total;
        out[3] = arm[1] * g;
        out[4] = -arm[0] * g;
        for (j, jt) in model.joints.iter().enumerate() {
            let ms = m[jt.child];
            let a = self.axis[j];
            out[6 + j] = match jt.kind {
                JointKind::Revolute => {
                    let arm = mc[jt.child] - self.origin[j] * ms;
                    // a · (arm × e3 g)
                    (a[0] * arm[1] - a[1] * arm[0]) * g
                }
                JointKind::Prismatic => a[2] * ms * g,
            };
        }
        out
    }

    pub fn center_of_mass(&self, mech: &Mechanism<T>) -> Vector3<T> {
        let mut mc = Vector3::<T>::zeros();
        let mut m = T::zero();
        for (c, &mi) in self.com.iter().zip(&mech.mass) {
            mc += c * mi;
            m += mi;
        }
        mc / m
    }

    /// Motion subspace of joint `j` about the world origin, `[v_O; ω]`.
    fn subspace(&self, model: &Model, j: usize) -> [T; 6] {
        let a = self.axis[j];
        match model.joints[j].kind {
            JointKind::Revolute => {
                let v = self.origin[j].cross(&a);
                [v[0], v[1], v[2], a[0], a[1], a[2]]
            }
            JointKind::Prismatic => [a[0], a[1], a[2], T::zero(), T::zero(), T::zero()],
        }
    }

    /// Composite rigid-body mass matrix.
    pub fn mass_matrix(&self, model: &Model, mech: &Mechanism<T>) -> DMatrix<T> {
        let nl = model.links.len();
        let n = model.dof();
        // Spatial inertias about the world origin, world axes.
        let mut ic: Vec<DMatrix<T>> = (0..nl)
            .map(|i| origin_inertia(mech.mass[i], &self.com[i], &(self.link_rotation[i] * mech.inertia_com[i] * self.link_rotation[i].transpose())))
            .collect();
        for &j in model.joint_order().iter().rev() {
            let jt = &model.joints[j];
            let child = ic[jt.child].clone();
            ic[jt.parent] += child;
        }
        let mut sb = DMatrix::<T>::zeros(6, 6);
        let sp = skew(&self.base_position);
        for k in 0..3 {
            sb[(k, k)] = T::one();
            sb[(3 + k, 3 + k)] = T::one();
            for l in 0..3 {
                sb[(k, 3 + l)] = sp[(k, l)];
            }
        }
        let mut mm = DMatrix::<T>::zeros(6 + n, 6 + n);
        let base_block = sb.transpose() * &ic[model.base] * &sb;
        mm.view_mut((0, 0), (6, 6)).copy_from(&base_block);
        for (j, jt) in model.joints.iter().enumerate() {
            let s = DVector::from_row_slice(&self.subspace(model, j));
            let f = &ic[jt.child] * &s;
            mm[(6 + j, 6 + j)] = s.dot(&f);
            let fb = sb.transpose() * &f;
            for k in 0..6 {
                mm[(k, 6 + j)] = fb[k];
                mm[(6 + j, k)] = fb[k];
            }
            for a in model.support(jt.parent) {
                let sa = DVector::from_row_slice(&self.subspace(model, a));
                let v = sa.dot(&f);
                mm[(6 + a, 6 + j)] = v;
                mm[(6 + j, 6 + a)] = v;
            }
        }
        mm
    }
}

fn origin_inertia<T: Real>(m: T, c: &Vector3<T>, ic_world: &Matrix3<T>) -> DMatrix<T> {
    let s = skew(c);
    let mut out = DMatrix::<T>::zeros(6, 6);
    let rot = ic_world - s * s * m;
    for a in 0..3 {
        out[(a, a)] = m;
        for b in 0..3 {
            out[(a, 3 + b)] = -s[(a, b)] * m;
            out[(3 + a, b)] = s[(a, b)] * m;
            out[(3 + a, 3 + b)] = rot[(a, b)];
        }
    }
    out
}

fn kin(model: &Model, q: &Configuration) -> (Mechanism<f64>, Kinematics<f64>) {
    let mech = Mechanism::from_model(model);
    let k = Kinematics::compute(model, &mech, q);
    (mech, k)
}

/// Length of the polyline through the joint origins between two frames.
/// No configuration brings the frames further apart than this.
pub fn chain_length(model: &Model, from: &str, to: &str) -> Result<f64> {
    let point = |f: FrameRef| match f {
        FrameRef::Frame(i) => model.scaled_frame_offset(i),
        FrameRef::Link(_) => Vec3::zeros(),
    };
    let (a, b) = (model.frame_index(from)?, model.frame_index(to)?);
    let path = |link: usize, start: Vec3| {
        let mut out = vec![(link, start)];
        let mut l = link;
        while let Some(j) = model.parent_joint(l) {
            l = model.joints[j].parent;
            out.push((l, model.scaled_joint_offset(j)));
        }
        out
    };
    let up = path(model.frame_link(a), point(a));
    let down = path(model.frame_link(b), point(b));
    let mut total = 0.0;
    let mut meet = None;
    for (i, &(l, p)) in up.iter().enumerate() {
        if let Some(k) = down.iter().position(|&(m, _)| m == l) {
            meet = Some((i, k));
            break;
        }
        total += p.norm();
    }
    let (i, k) = meet.expect("links of one tree share the base");
    for &(_, p) in &down[..k] {
        total += p.norm();
    }
    total += (up[i].1 - down[k].1).norm();
    Ok(total)
}

/// World pose `h_A(q)` of a frame or link.
pub fn forward_kinematics(model: &Model, q: &Configuration, frame: &str) -> Result<(Rotation, Vec3)> {
    let f = model.frame_index(frame)?;
    let (mech, k) = kin(model, q);
    let (r, p) = k.frame_pose(model, &mech, f);
    Ok((Rotation::orthonormalized(r), p))
}

pub fn frame_jacobian(model: &Model, q: &Configuration, frame: &str) -> Result<DMatrix<f64>> {
    let f = model.frame_index(frame)?;
    let (mech, k) = kin(model, q);
    let j = k.frame_jacobian(model, &mech, f);
    Ok(DMatrix::from_column_slice(6, j.ncols(), j.as_slice()))
}

pub fn mass_matrix(model: &Model, q: &Configuration) -> DMatrix<f64> {
    let (mech, k) = kin(model, q);
    k.mass_matrix(model, &mech)
}

pub fn gravity_vector(model: &Model, q: &Configuration) -> DVector<f64> {
    let (mech, k) = kin(model, q);
    k.gravity(model, &mech)
}

/// Inverse dynamics `M(q)ν̇ + h(q, ν)` by recursive Newton–Euler, in
/// world-origin spatial coordinates.
pub fn inverse_dynamics(model: &Model, q: &Configuration, nu: &DVector<f64>, nu_dot: &DVector<f64>) -> DVector<f64> {
    let (mech, k) = kin(model, q);
    let n = model.dof();
    let nl = model.links.len();
    type V6 = nalgebra::Vector6<f64>;
    let crm = |v: &V6, x: &V6| -> V6 {
        let (vl, w) = (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
        let (xl, xw) = (Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]));
        let a = w.cross(&xl) + vl.cross(&xw);
        let b = w.cross(&xw);
        V6::new(a[0], a[1], a[2], b[0], b[1], b[2])
    };
    let crf = |v: &V6, f: &V6| -> V6 {
        let (vl, w) = (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
        let (fl, fn_) = (Vec3::new(f[0], f[1], f[2]), Vec3::new(f[3], f[4], f[5]));
        let a = w.cross(&fl);
        let b = vl.cross(&fl) + w.cross(&fn_);
        V6::new(a[0], a[1], a[2], b[0], b[1], b[2])
    };
    let inertia: Vec<nalgebra::Matrix6<f64>> = (0..nl)
        .map(|i| {
            let ic = k.link_rotation[i] * mech.inertia_com[i] * k.link_rotation[i].transpose();
            let m = origin_inertia(mech.mass[i], &k.com[i], &ic);
            nalgebra::Matrix6::from_column_slice(m.as_slice())
        })
        .collect();
    let pb = k.base_position;
    let pdot = Vec3::new(nu[0], nu[1], nu[2]);
    let w = Vec3::new(nu[3], nu[4], nu[5]);
    let pdd = Vec3::new(nu_dot[0], nu_dot[1], nu_dot[2]);
    let wd = Vec3::new(nu_dot[3], nu_dot[4], nu_dot[5]);
    let vb = pdot + pb.cross(&w);
    let ab = pdd + pb.cross(&wd) + pdot.cross(&w) + Vec3::new(0.0, 0.0, GRAVITY);
    let mut vel = vec![V6::zeros(); nl];
    let mut acc = vec![V6::zeros(); nl];
    vel[model.base] = V6::new(vb[0], vb[1], vb[2], w[0], w[1], w[2]);
    acc[model.base] = V6::new(ab[0], ab[1], ab[2], wd[0], wd[1], wd[2]);
    let subspace = |j: usize| V6::from_row_slice(&k.subspace(model, j));
    for &j in model.joint_order() {
        let jt = &model.joints[j];
        let s = subspace(j);
        let vp = vel[jt.parent];
        vel[jt.child] = vp + s * nu[6 + j];
        acc[jt.child] = acc[jt.parent] + s * nu_dot[6 + j] + crm(&vp, &s) * nu[6 + j];
    }
    let mut force: Vec<V6> = (0..nl)
        .map(|i| inertia[i] * acc[i] + crf(&vel[i], &(inertia[i] * vel[i])))
        .collect();
    let mut out = DVector::zeros(6 + n);
    for &j in model.joint_order().iter().rev() {
        let jt = &model.joints[j];
        out[6 + j] = subspace(j).dot(&force[jt.child]);
        let fc = force[jt.child];
        force[jt.parent] += fc;
    }
    let fb = force[model.base];
    let (f, t) = (Vec3::new(fb[0], fb[1], fb[2]), Vec3::new(fb[3], fb[4], fb[5]));
    // S_Bᵀ F with S_B = [[1, S(p_B)], [0, 1]]
    let tb = skew(&pb).transpose() * f + t;
    for kx in 0..3 {
        out[kx] = f[kx];
        out[3 + kx] = tb[kx];
    }
    out
}

/// `h(q, ν)`: Coriolis, centrifugal and gravity terms.
pub fn bias_forces(model: &Model, q: &Configuration, nu: &DVector<f64>) -> DVector<f64> {
    inverse_dynamics(model, q, nu, &DVector::zeros(nu.len()))
}

/// Height of the reference ground point for the null configuration: the
/// lowest foot frame when feet are declared, else the base link origin.
fn ground_reference<T: Real>(model: &Model, mech: &Mechanism<T>, k: &Kinematics<T>) -> T {
    let feet: Vec<T> = [&model.roles.left_foot, &model.roles.right_foot]
        .into_iter()
        .flatten()
        .filter_map(|n| model.frame_index(n).ok())
        .map(|f| k.frame_pose(model, mech, f).1[2])
        .collect();
    match feet.split_first() {
        None => k.link_position[model.base][2],
        Some((first, rest)) => rest.iter().fold(*first, |a, &b| if b.re() < a.re() { b } else { a }),
    }
}

/// Whole-body center-of-mass height at `s = 0`, identity base orientation,
/// with the feet resting on the ground plane.
pub fn com_height_at_null<T: Real>(model: &Model, mech: &Mechanism<T>) -> T {
    let q = Configuration::<f64>::neutral(model.dof()).lift::<T>();
    let k = Kinematics::compute(model, mech, &q);
    k.center_of_mass(mech)[2] - ground_reference(model, mech, &k)
}

pub fn com_height_null_config(model: &Model, params: &HardwareParams) -> Result<f64> {
    let scaled = apply_hardware(model, params, &HardwareBounds {
        length_multiplier: (f64::MIN_POSITIVE, f64::MAX),
        density: (f64::MIN_POSITIVE, f64::MAX),
    })?;
    let mech = Mechanism::<f64>::from_model(&scaled);
    let h = com_height_at_null(&scaled, &mech);
    if !h.is_finite() {
        return Err(Error::DegenerateModel("center of mass height is not finite".into()));
    }
    Ok(h)
}
