//! Bundled humanoid templates and the payload.
//!
//! Both agents share one topology: a pelvis base, 6-DoF legs, torso and neck
//! pitch, and 6-DoF arms. Link frames are world-aligned at `s = 0` with `x`
//! forward, `y` left and `z` up. Right-side roll and yaw axes are negated so
//! that mirrored postures have equal joint values.

use crate::model::{Frame, Joint, JointKind, Link, Model, PrincipalAxis, Roles};
use crate::shapes::{LinkHardware, Shape};
use crate::spatial::{Mat3, Vec3};

/// Segment sizes of the humanoid template (m, kg/m³).
#[derive(Clone, Debug, PartialEq)]
pub struct HumanoidDims {
    pub name: String,
    pub density: f64,
    pub ankle_height: f64,
    pub shank: f64,
    pub shank_radius: f64,
    pub thigh: f64,
    pub thigh_radius: f64,
    pub hip_half_width: f64,
    /// (depth, width, height)
    pub pelvis: (f64, f64, f64),
    pub torso: (f64, f64, f64),
    pub head_radius: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub upper_arm_radius: f64,
    pub forearm: f64,
    pub forearm_radius: f64,
    /// (depth, width, length)
    pub hand: (f64, f64, f64),
    /// Distance from the wrist to the grasp point.
    pub grasp: f64,
    /// (heel, length, width)
    pub foot: (f64, f64, f64),
    pub joint_radius: f64,
}

impl HumanoidDims {
    /// Adult proportions scaled to `stature`, water density.
    pub fn human(stature: f64) -> Self {
        let h = stature;
        Self {
            name: "human".into(),
            density: 1000.0,
            ankle_height: 0.039 * h,
            shank: 0.246 * h,
            shank_radius: 0.0282 * h,
            thigh: 0.245 * h,
            thigh_radius: 0.0415 * h,
            hip_half_width: 0.05 * h,
            pelvis: (0.11 * h, 0.165 * h, 0.1 * h),
            torso: (0.121 * h, 0.187 * h, 0.188 * h),
            head_radius: 0.0636 * h,
            shoulder_half_width: 0.1295 * h,
            upper_arm: 0.186 * h,
            upper_arm_radius: 0.0252 * h,
            forearm: 0.146 * h,
            forearm_radius: 0.0215 * h,
            hand: (0.044 * h, 0.0165 * h, 0.108 * h),
            grasp: 0.06 * h,
            foot: (0.03 * h, 0.152 * h, 0.055 * h),
            joint_radius: 0.0165 * h,
        }
    }

    /// A child-sized humanoid robot, about 1.1 m tall.
    pub fn desk_robot() -> Self {
        Self {
            name: "desk-robot".into(),
            density: 2200.0,
            ankle_height: 0.06,
            shank: 0.24,
            shank_radius: 0.035,
            thigh: 0.24,
            thigh_radius: 0.04,
            hip_half_width: 0.07,
            pelvis: (0.12, 0.18, 0.1),
            torso: (0.11, 0.18, 0.3),
            head_radius: 0.07,
            shoulder_half_width: 0.13,
            upper_arm: 0.19,
            upper_arm_radius: 0.028,
            forearm: 0.17,
            forearm_radius: 0.025,
            hand: (0.06, 0.025, 0.09),
            grasp: 0.07,
            foot: (0.04, 0.16, 0.07),
            joint_radius: 0.025,
        }
    }
}

struct Builder {
    links: Vec<Link>,
    joints: Vec<Joint>,
    frames: Vec<Frame>,
    density: f64,
}

impl Builder {
    fn link(&mut self, name: &str, shape: Shape, axis: PrincipalAxis, origin: Vec3, group: Option<&str>) -> usize {
        self.links.push(Link {
            name: name.into(),
            shape,
            hardware: LinkHardware {
                density: self.density,
                length_multiplier: 1.0,
            },
            axis,
            origin,
            group: group.map(Into::into),
        });
        self.links.len() - 1
    }

    fn joint(&mut self, name: &str, parent: usize, child: usize, axis: Vec3, offset: Vec3, limits: (f64, f64)) {
        self.joints.push(Joint {
            name: name.into(),
            kind: JointKind::Revolute,
            parent,
            child,
            axis,
            offset,
            rotation: Mat3::identity(),
            limits,
        });
    }

    /// Small sphere centered on the joint.
    fn knuckle(&mut self, name: &str, r: f64) -> usize {
        self.link(name, Shape::Sphere { r }, PrincipalAxis::PosZ, Vec3::new(0.0, 0.0, -r), None)
    }

    fn frame(&mut self, name: &str, link: usize, offset: Vec3) {
        self.frames.push(Frame {
            name: name.into(),
            link,
            offset,
            rotation: Mat3::identity(),
        });
    }
}

/// Builds the 27-link, 26-joint humanoid.
pub fn humanoid(d: &HumanoidDims) -> Model {
    let mut b = Builder {
        links: Vec::new(),
        joints: Vec::new(),
        frames: Vec::new(),
        density: d.density,
    };
    let (x, y, z) = (Vec3::x(), Vec3::y(), Vec3::z());
    let pelvis = b.link(
        "pelvis",
        Shape::Box {
            w: d.pelvis.0,
            h: d.pelvis.1,
            d: d.pelvis.2,
        },
        PrincipalAxis::PosZ,
        Vec3::zeros(),
        None,
    );
    let torso = b.link(
        "torso",
        Shape::Box {
            w: d.torso.0,
            h: d.torso.1,
            d: d.torso.2,
        },
        PrincipalAxis::PosZ,
        Vec3::zeros(),
        Some("torso"),
    );
    b.joint("torso_pitch", pelvis, torso, y, Vec3::new(0.0, 0.0, d.pelvis.2), (-0.3, 1.2));
    let head = b.link("head", Shape::Sphere { r: d.head_radius }, PrincipalAxis::PosZ, Vec3::zeros(), None);
    b.joint("neck_pitch", torso, head, y, Vec3::new(0.0, 0.0, d.torso.2), (-0.5, 0.5));

    for (side, s) in [("l", 1.0), ("r", -1.0)] {
        let n = |part: &str| format!("{side}_{part}");
        let hip1 = b.knuckle(&n("hip_1"), d.joint_radius);
        b.joint(&n("hip_pitch"), pelvis, hip1, y, Vec3::new(0.0, s * d.hip_half_width, 0.0), (-1.8, 0.5));
        let hip2 = b.knuckle(&n("hip_2"), d.joint_radius);
        b.joint(&n("hip_roll"), hip1, hip2, x * s, Vec3::zeros(), (-0.5, 0.5));
        let thigh = b.link(
            &n("thigh"),
            Shape::Cylinder {
                r: d.thigh_radius,
                h: d.thigh,
            },
            PrincipalAxis::NegZ,
            Vec3::zeros(),
            Some("thigh"),
        );
        b.joint(&n("hip_yaw"), hip2, thigh, z * s, Vec3::zeros(), (-0.6, 0.6));
        let shank = b.link(
            &n("shank"),
            Shape::Cylinder {
                r: d.shank_radius,
                h: d.shank,
            },
            PrincipalAxis::NegZ,
            Vec3::zeros(),
            Some("shank"),
        );
        b.joint(&n("knee"), thigh, shank, y, Vec3::new(0.0, 0.0, -d.thigh), (0.15, 2.2));
        let ankle = b.knuckle(&n("ankle_1"), d.joint_radius);
        b.joint(&n("ankle_pitch"), shank, ankle, y, Vec3::new(0.0, 0.0, -d.shank), (-0.7, 0.7));
        let (heel, length, width) = d.foot;
        let foot = b.link(
            &n("foot"),
            Shape::Box {
                w: d.ankle_height,
                h: width,
                d: length,
            },
            PrincipalAxis::PosX,
            Vec3::new(-heel, 0.0, -0.5 * d.ankle_height),
            None,
        );
        b.joint(&n("ankle_roll"), ankle, foot, x * s, Vec3::zeros(), (-0.4, 0.4));
        b.frame(&n("sole"), foot, Vec3::new(0.5 * length - heel, 0.0, -d.ankle_height));

        let sh1 = b.knuckle(&n("shoulder_1"), d.joint_radius);
        b.joint(
            &n("shoulder_pitch"),
            torso,
            sh1,
            y,
            Vec3::new(0.0, s * d.shoulder_half_width, d.torso.2),
            (-3.0, 0.8),
        );
        let sh2 = b.knuckle(&n("shoulder_2"), d.joint_radius);
        b.joint(&n("shoulder_roll"), sh1, sh2, x * s, Vec3::zeros(), (-0.3, 2.0));
        let upper = b.link(
            &n("upper_arm"),
            Shape::Cylinder {
                r: d.upper_arm_radius,
                h: d.upper_arm,
            },
            PrincipalAxis::NegZ,
            Vec3::zeros(),
            Some("upper_arm"),
        );
        b.joint(&n("shoulder_yaw"), sh2, upper, z * s, Vec3::zeros(), (-1.2, 1.2));
        let fore = b.link(
            &n("forearm"),
            Shape::Cylinder {
                r: d.forearm_radius,
                h: d.forearm,
            },
            PrincipalAxis::NegZ,
            Vec3::zeros(),
            Some("forearm"),
        );
        b.joint(&n("elbow"), upper, fore, y, Vec3::new(0.0, 0.0, -d.upper_arm), (-2.4, -0.15));
        let wrist = b.knuckle(&n("wrist_1"), 0.6 * d.joint_radius);
        b.joint(&n("wrist_pitch"), fore, wrist, y, Vec3::new(0.0, 0.0, -d.forearm), (-1.0, 1.0));
        let hand = b.link(
            &n("hand"),
            Shape::Box {
                w: d.hand.0,
                h: d.hand.1,
                d: d.hand.2,
            },
            PrincipalAxis::NegZ,
            Vec3::zeros(),
            None,
        );
        b.joint(&n("wrist_roll"), wrist, hand, x * s, Vec3::zeros(), (-0.8, 0.8));
        b.frame(&n("grasp"), hand, Vec3::new(0.0, 0.0, -d.grasp));
    }
    let roles = Roles {
        left_hand: Some("l_grasp".into()),
        right_hand: Some("r_grasp".into()),
        left_foot: Some("l_sole".into()),
        right_foot: Some("r_sole".into()),
    };
    Model::new(d.name.clone(), b.links, b.joints, b.frames, pelvis, roles).expect("humanoid template is valid")
}

pub fn human(stature: f64) -> Model {
    humanoid(&HumanoidDims::human(stature))
}

pub fn desk_robot() -> Model {
    humanoid(&HumanoidDims::desk_robot())
}

/// A flat box payload whose base frame sits at its centroid. Grasp frames
/// `{prefix}_l` / `{prefix}_r` are placed on the edges facing each agent.
#[derive(Clone, Debug, PartialEq)]
pub struct PayloadDims {
    pub size: (f64, f64, f64),
    pub mass: f64,
    /// Lateral offset of the grasp points from the center line.
    pub grasp_half_width: f64,
}

impl Default for PayloadDims {
    fn default() -> Self {
        Self {
            size: (0.5, 0.5, 0.025),
            mass: 5.0,
            grasp_half_width: 0.2,
        }
    }
}

/// Payload with grasp frames `a_l`, `a_r` on the `−x` edge (first agent) and
/// `b_l`, `b_r` on the `+x` edge (second agent, facing `−x`).
pub fn payload(p: &PayloadDims) -> Model {
    let (sx, sy, sz) = p.size;
    let density = p.mass / (sx * sy * sz);
    let link = Link {
        name: "payload".into(),
        shape: Shape::Box { w: sx, h: sy, d: sz },
        hardware: LinkHardware {
            density,
            length_multiplier: 1.0,
        },
        axis: PrincipalAxis::PosZ,
        origin: Vec3::new(0.0, 0.0, -0.5 * sz),
        group: None,
    };
    let g = p.grasp_half_width;
    let frame = |name: &str, x: f64, y: f64| Frame {
        name: name.into(),
        link: 0,
        offset: Vec3::new(x, y, 0.0),
        rotation: Mat3::identity(),
    };
    let frames = vec![
        frame("a_l", -0.5 * sx, g),
        frame("a_r", -0.5 * sx, -g),
        frame("b_l", 0.5 * sx, -g),
        frame("b_r", 0.5 * sx, g),
    ];
    Model::new("payload", vec![link], Vec::new(), frames, 0, Roles::default()).expect("payload is valid")
}
