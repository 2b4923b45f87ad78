//! Link inertial parametrization by primitive shape, uniform density and a
//! length multiplier acting along the shape's principal (growth) direction.
//!
//! Shapes live in their own frame: the principal direction is `+z` and the
//! origin sits at the proximal end of the shape on the principal axis. Box
//! extents are `w` along `x`, `h` along `y` and `d` along `z`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Sphere { r: f64 },
    Cylinder { r: f64, h: f64 },
    Box { w: f64, h: f64, d: f64 },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let dims: &[f64] = match self {
            Shape::Sphere { r } => &[*r],
            Shape::Cylinder { r, h } => &[*r, *h],
            Shape::Box { w, h, d } => &[*w, *h, *d],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!(
                "all dimensions must be positive, got {self:?}"
            )))
        }
    }

    /// Nominal extent along the principal axis.
    pub fn principal_length(&self) -> f64 {
        match self {
            Shape::Sphere { r } => 2.0 * r,
            Shape::Cylinder { h, .. } => *h,
            Shape::Box { d, .. } => *d,
        }
    }

    /// Name of the dimension scaled by the length multiplier.
    pub fn principal_dimension(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "r",
            Shape::Cylinder { .. } => "h",
            Shape::Box { .. } => "d",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkHardware {
    /// kg/m³
    pub density: f64,
    pub length_multiplier: f64,
}

impl LinkHardware {
    pub fn new(density: f64, length_multiplier: f64) -> Result<Self> {
        let hw = Self {
            density,
            length_multiplier,
        };
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(Error::InvalidHardware(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        if !(self.length_multiplier.is_finite() && self.length_multiplier > 0.0) {
            return Err(Error::InvalidHardware(format!(
                "length multiplier must be positive, got {}",
                self.length_multiplier
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkInertialSummary {
    pub mass: f64,
    pub com: Vec3,
    /// About the center of mass, shape axes.
    pub inertia_com: Mat3,
}

/// Closed-form mass, centroid and principal moments about the centroid,
/// generic so hardware parameters can carry derivatives.
pub fn closed_form<T: Real>(shape: &Shape, lm: T, rho: T) -> (T, Vector3<T>, Vector3<T>) {
    let z = T::zero();
    match *shape {
        Shape::Sphere { r } => {
            let rs = T::c(r) * lm;
            let m = T::c(4.0 * PI / 3.0) * rs * rs * rs * rho;
            let i = m * T::c(0.4) * rs * rs;
            (m, Vector3::new(z, z, rs), Vector3::new(i, i, i))
        }
        Shape::Cylinder { r, h } => {
            let hs = T::c(h) * lm;
            let m = T::c(PI * r * r) * hs * rho;
            let ixx = m * (T::c(3.0 * r * r) + hs * hs) / T::c(12.0);
            (
                m,
                Vector3::new(z, z, hs * T::c(0.5)),
                Vector3::new(ixx, ixx, m * T::c(0.5 * r * r)),
            )
        }
        Shape::Box { w, h, d } => {
            let ds = T::c(d) * lm;
            let m = T::c(w * h) * ds * rho;
            let twelfth = T::c(1.0 / 12.0);
            (
                m,
                Vector3::new(z, z, ds * T::c(0.5)),
                Vector3::new(
                    m * (T::c(h * h) + ds * ds) * twelfth,
                    m * (T::c(w * w) + ds * ds) * twelfth,
                    m * T::c(w * w + h * h) * twelfth,
                ),
            )
        }
    }
}

fn checked(shape: &Shape, hw: &LinkHardware) -> Result<(f64, Vec3, Vec3)> {
    shape.validate()?;
    hw.validate()?;
    Ok(closed_form(shape, hw.length_multiplier, hw.density))
}

pub fn shape_mass(shape: &Shape, hw: &LinkHardware) -> Result<f64> {
    checked(shape, hw).map(|(m, _, _)| m)
}

pub fn shape_inertia_cm(shape: &Shape, hw: &LinkHardware) -> Result<Mat3> {
    checked(shape, hw).map(|(_, _, d)| Matrix3::from_diagonal(&d))
}

pub fn shape_com(shape: &Shape, hw: &LinkHardware) -> Result<Vec3> {
    checked(shape, hw).map(|(_, c, _)| c)
}

pub fn shape_summary(shape: &Shape, hw: &LinkHardware) -> Result<LinkInertialSummary> {
    checked(shape, hw).map(|(mass, com, d)| LinkInertialSummary {
        mass,
        com,
        inertia_com: Matrix3::from_diagonal(&d),
    })
}

/// Midpoint-rule integration of mass, first and second moments over a
/// uniform grid covering the scaled shape's bounding box.
///
/// Independent of the closed forms; converges to them as `resolution` grows.
pub fn voxel_inertia_oracle(
    shape: &Shape,
    hw: &LinkHardware,
    resolution: usize,
) -> Result<LinkInertialSummary> {
    shape.validate()?;
    if resolution < 16 {
        return Err(Error::InvalidShape(format!(
            "voxel resolution must be at least 16, got {resolution}"
        )));
    }
    let lm = hw.length_multiplier;
    // Half extents in x, y and the full extent along z.
    let (ax, ay, lz) = match *shape {
        Shape::Sphere { r } => (r * lm, r * lm, 2.0 * r * lm),
        Shape::Cylinder { r, h } => (r, r, h * lm),
        Shape::Box { w, h, d } => (0.5 * w, 0.5 * h, d * lm),
    };
    let inside = |x: f64, y: f64, z: f64| -> bool {
        match *shape {
            Shape::Sphere { r } => {
                let rs = r * lm;
                x * x + y * y + (z - rs) * (z - rs) <= rs * rs
            }
            Shape::Cylinder { r, .. } => x * x + y * y <= r * r,
            Shape::Box { .. } => true,
        }
    };
    let n = resolution;
    let (dx, dy, dz) = (2.0 * ax / n as f64, 2.0 * ay / n as f64, lz / n as f64);
    let dv = dx * dy * dz;
    let rho = hw.density;

    // [m, mx, my, mz, xx, yy, zz, xy, xz, yz]
    let slabs: Vec<[f64; 10]> = (0..n)
        .into_par_iter()
        .map(|k| {
            let z = (k as f64 + 0.5) * dz;
            let mut acc = [0.0; 10];
            for j in 0..n {
                let y = -ay + (j as f64 + 0.5) * dy;
                for i in 0..n {
                    let x = -ax + (i as f64 + 0.5) * dx;
                    if inside(x, y, z) {
                        acc[0] += 1.0;
                        acc[1] += x;
                        acc[2] += y;
                        acc[3] += z;
                        acc[4] += x * x;
                        acc[5] += y * y;
                        acc[6] += z * z;
                        acc[7] += x * y;
                        acc[8] += x * z;
                        acc[9] += y * z;
                    }
                }
            }
            acc
        })
        .collect();
    let mut s = [0.0; 10];
    for slab in &slabs {
        for (a, b) in s.iter_mut().zip(slab) {
            *a += b;
        }
    }
    for v in s.iter_mut() {
        *v *= rho * dv;
    }
    let mass = s[0];
    let com = if mass > 0.0 {
        Vec3::new(s[1], s[2], s[3]) / mass
    } else {
        Vec3::zeros()
    };
    // -∫ρ S(r)² = ∫ρ (rᵀr·1 − r rᵀ), about the shape origin.
    let second = Mat3::new(s[4], s[7], s[8], s[7], s[5], s[9], s[8], s[9], s[6]);
    let about_origin = Mat3::identity() * second.trace() - second;
    let shift = Mat3::identity() * com.dot(&com) - com * com.transpose();
    Ok(LinkInertialSummary {
        mass,
        com,
        inertia_com: about_origin - shift * mass,
    })
}
