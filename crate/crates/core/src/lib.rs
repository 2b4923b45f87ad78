//! Co-design of humanoid hardware and collaborative lifting postures.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupled;
pub mod ergo;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod model;
pub mod scalar;
pub mod shapes;
pub mod spatial;
pub mod templates;

pub use error::{Error, Result};
pub use kinematics::{Configuration, Kinematics, Mechanism};
pub use model::{apply_hardware, FrameRef, HardwareBounds, HardwareParams, JointKind, Model};
pub use scalar::{Dual, Real};
pub use shapes::{LinkHardware, Shape};
pub use spatial::{Mat3, Mat6, Rotation, Vec3, Vec6, Wrench, WrenchTransform};
