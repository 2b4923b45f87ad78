//! 6D spatial algebra: skew operator, wrench transforms, the dual cross
//! product, spatial inertia and the single-body Newton–Euler residual.
//!
//! Six-vectors are stacked linear part first: `[v; ω]` for velocities and
//! `[f; τ]` for wrenches.

use nalgebra::{Matrix3, Matrix6, SVector, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Gravity acceleration in the world frame (z up).
pub fn gravity_acceleration() -> Vec3 {
    Vec3::new(0.0, 0.0, -GRAVITY)
}

/// `S(v)` such that `S(v) u = v × u`.
#[inline]
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v[2], v[1], v[2], z, -v[0], -v[1], v[0], z)
}

pub fn rot_x<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = (a.sin(), a.cos());
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(o, z, z, z, c, -s, z, s, c)
}

pub fn rot_y<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = (a.sin(), a.cos());
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, z, s, z, o, z, -s, z, c)
}

pub fn rot_z<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = (a.sin(), a.cos());
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, -s, z, s, c, z, z, z, o)
}

/// `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn rpy_to_matrix<T: Real>(roll: T, pitch: T, yaw: T) -> Matrix3<T> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Rotation about a unit axis (Rodrigues).
pub fn axis_angle<T: Real>(axis: &Vector3<T>, angle: T) -> Matrix3<T> {
    let k = skew(axis);
    Matrix3::identity() * T::one() + k * angle.sin() + k * k * (T::one() - angle.cos())
}

/// Element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub const ORTHONORMALITY_TOL: f64 = 1e-9;

    /// Validates `m`; drift above tolerance is rejected rather than repaired.
    pub fn new(m: Mat3) -> Result<Self> {
        let err = (m.transpose() * m - Mat3::identity()).abs().max();
        let det = m.determinant();
        if err <= Self::ORTHONORMALITY_TOL && (det - 1.0).abs() <= Self::ORTHONORMALITY_TOL {
            Ok(Self(m))
        } else {
            Err(Error::InvalidHardware(format!(
                "matrix is not a rotation (‖RᵀR−I‖ = {err:e}, det = {det})"
            )))
        }
    }

    /// Nearest rotation in the Frobenius sense (polar decomposition); the
    /// input is returned untouched when it already satisfies the tolerance.
    pub fn orthonormalized(m: Mat3) -> Self {
        if let Ok(r) = Self::new(m) {
            return r;
        }
        let svd = m.svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        let mut d = Mat3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * vt)
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self(rpy_to_matrix(roll, pitch, yaw))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn z_axis(&self) -> Vec3 {
        self.0.column(2).into_owned()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::orthonormalized(self.0 * rhs.0)
    }
}

/// Identifies the frame a wrench is expressed in.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum FrameTag {
    #[default]
    World,
    Named(String),
}

impl FrameTag {
    pub fn named(name: impl Into<String>) -> Self {
        FrameTag::Named(name.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SpatialVelocity {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl SpatialVelocity {
    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    pub fn to_vector(&self) -> Vec6 {
        stack(&self.linear, &self.angular)
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
    pub frame: FrameTag,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3, frame: FrameTag) -> Self {
        Self {
            force,
            torque,
            frame,
        }
    }

    pub fn from_vector(v: &Vec6, frame: FrameTag) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into(), frame)
    }

    pub fn to_vector(&self) -> Vec6 {
        stack(&self.force, &self.torque)
    }
}

pub(crate) fn stack(a: &Vec3, b: &Vec3) -> Vec6 {
    Vec6::new(a[0], a[1], a[2], b[0], b[1], b[2])
}

/// `_A X^B`: maps wrenches expressed in `B` to wrenches expressed in `A`.
///
/// The bottom-left block is `S(ᴬp_B)·ᴬR_B`, which keeps the transform a group
/// homomorphism for rotated frames.
#[derive(Clone, Debug, PartialEq)]
pub struct WrenchTransform {
    pub rotation: Rotation,
    /// Origin of `B` expressed in `A`.
    pub translation: Vec3,
    pub from: FrameTag,
    pub to: FrameTag,
}

impl WrenchTransform {
    pub fn new(rotation: Rotation, translation: Vec3, from: FrameTag, to: FrameTag) -> Self {
        Self {
            rotation,
            translation,
            from,
            to,
        }
    }

    pub fn identity(frame: FrameTag) -> Self {
        Self::new(Rotation::identity(), Vec3::zeros(), frame.clone(), frame)
    }

    pub fn matrix(&self) -> Mat6 {
        let r = self.rotation.matrix();
        let mut x = Mat6::zeros();
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        x.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(skew(&self.translation) * r));
        x
    }

    pub fn apply(&self, w: &Wrench) -> Wrench {
        debug_assert_eq!(w.frame, self.from, "wrench expressed in the wrong frame");
        let r = self.rotation.matrix();
        let f = r * w.force;
        let tau = r * w.torque + self.translation.cross(&f);
        Wrench::new(f, tau, self.to.clone())
    }

    /// `self ∘ inner`: first `inner` (C → B), then `self` (B → A).
    pub fn compose(&self, inner: &WrenchTransform) -> WrenchTransform {
        let r = self.rotation.matrix();
        WrenchTransform::new(
            self.rotation * inner.rotation,
            self.translation + r * inner.translation,
            inner.from.clone(),
            self.to.clone(),
        )
    }

    pub fn inverse(&self) -> WrenchTransform {
        let rt = self.rotation.inverse();
        WrenchTransform::new(
            rt,
            -(rt.matrix() * self.translation),
            self.to.clone(),
            self.from.clone(),
        )
    }
}

/// Applies a wrench transform (B → A) to a raw 6-vector.
pub fn wrench_transform(x: &WrenchTransform, w: &Wrench) -> Wrench {
    x.apply(w)
}

/// `v̄×*` for `v = [v; ω]`: `[[S(ω), 0], [S(v), S(ω)]]`.
pub fn dual_cross_matrix(v: &SpatialVelocity) -> Mat6 {
    let sw = skew(&v.angular);
    let sv = skew(&v.linear);
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&sw);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&sv);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&sw);
    m
}

pub fn dual_cross(v: &SpatialVelocity, w: &Vec6) -> Vec6 {
    let top: Vec3 = w.fixed_rows::<3>(0).into();
    let bottom: Vec3 = w.fixed_rows::<3>(3).into();
    stack(
        &v.angular.cross(&top),
        &(v.linear.cross(&top) + v.angular.cross(&bottom)),
    )
}

/// Rigid-body inertia about the origin of a frame `A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    /// Center of mass in `A`.
    pub com: Vec3,
    /// Rotational inertia about the origin of `A`.
    pub inertia: Mat3,
}

impl SpatialInertia {
    pub fn zero() -> Self {
        Self {
            mass: 0.0,
            com: Vec3::zeros(),
            inertia: Mat3::zeros(),
        }
    }

    /// Builds the inertia about `A`'s origin from the inertia about the
    /// center of mass (parallel-axis theorem).
    pub fn from_com_inertia(mass: f64, com: Vec3, inertia_com: Mat3) -> Result<Self> {
        let s = skew(&com);
        assemble_spatial_inertia(mass, com, inertia_com - mass * s * s).map(|(si, _)| si)
    }

    pub fn first_moment(&self) -> Vec3 {
        self.mass * self.com
    }

    pub fn matrix(&self) -> Mat6 {
        let mut m = Mat6::zeros();
        let mc = skew(&self.first_moment());
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Mat3::identity() * self.mass));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-mc));
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&mc);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.inertia);
        m
    }

    /// Inertia about the center of mass.
    pub fn inertia_at_com(&self) -> Mat3 {
        let s = skew(&self.com);
        self.inertia + self.mass * s * s
    }
}

/// Assembles `[[m·1, −m·S(c)], [m·S(c), I_A]]`.
pub fn assemble_spatial_inertia(mass: f64, com: Vec3, inertia: Mat3) -> Result<(SpatialInertia, Mat6)> {
    if mass < 0.0 || !mass.is_finite() {
        return Err(Error::NegativeMass(mass));
    }
    let si = SpatialInertia { mass, com, inertia };
    let m = si.matrix();
    Ok((si, m))
}

/// `M·a^g + v̄×*·M·v − f` in body coordinates, where
/// `a^g = a − [R_IBᵀ g; 0]`.
pub fn newton_euler_residual(
    inertia: &SpatialInertia,
    v: &SpatialVelocity,
    accel: &Vec6,
    gravity: &Vec3,
    r_ib: &Rotation,
    f: &Wrench,
) -> Vec6 {
    let m = inertia.matrix();
    let g_body = r_ib.matrix().transpose() * gravity;
    let proper = accel - stack(&g_body, &Vec3::zeros());
    m * proper + dual_cross(v, &(m * v.to_vector())) - f.to_vector()
}

/// Copies a 3-block into a generic 6-vector.
pub fn stack6<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> SVector<T, 6> {
    SVector::<T, 6>::from_column_slice(&[a[0], a[1], a[2], b[0], b[1], b[2]])
}
