//! Floating-base kinematic tree description and hardware parameters.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::{LinkHardware, Shape};
use crate::spatial::{Mat3, Vec3};

/// Growth direction of a link, in the link frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipalAxis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl PrincipalAxis {
    pub fn unit(&self) -> Vec3 {
        match self {
            PrincipalAxis::PosX => Vec3::x(),
            PrincipalAxis::NegX => -Vec3::x(),
            PrincipalAxis::PosY => Vec3::y(),
            PrincipalAxis::NegY => -Vec3::y(),
            PrincipalAxis::PosZ => Vec3::z(),
            PrincipalAxis::NegZ => -Vec3::z(),
        }
    }

    /// Rotation taking shape coordinates (principal axis `+z`) to link
    /// coordinates.
    pub fn shape_rotation(&self) -> Mat3 {
        match self {
            PrincipalAxis::PosZ => Mat3::identity(),
            PrincipalAxis::NegZ => Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
            PrincipalAxis::PosX => Mat3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0),
            PrincipalAxis::NegX => Mat3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0),
            PrincipalAxis::PosY => Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0),
            PrincipalAxis::NegY => Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    pub shape: Shape,
    pub hardware: LinkHardware,
    pub axis: PrincipalAxis,
    /// Proximal end of the shape in the link frame.
    pub origin: Vec3,
    /// Hardware parameter group; `None` for links that are never optimized.
    pub group: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: usize,
    pub child: usize,
    /// Unit axis in the joint frame.
    pub axis: Vec3,
    /// Joint frame origin in the parent link frame (nominal, unscaled).
    pub offset: Vec3,
    /// Joint frame orientation relative to the parent link frame.
    pub rotation: Mat3,
    pub limits: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub name: String,
    pub link: usize,
    pub offset: Vec3,
    pub rotation: Mat3,
}

/// Named attachment frames used by the collaboration scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Roles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_hand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_hand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_foot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_foot: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: String,
    pub links: Vec<Link>,
    /// Joint `j` drives `s[j]`.
    pub joints: Vec<Joint>,
    pub frames: Vec<Frame>,
    pub base: usize,
    pub roles: Roles,
    parent_joint: Vec<Option<usize>>,
    /// Joints sorted so that every parent link is placed before its children.
    order: Vec<usize>,
}

impl Model {
    pub fn new(
        name: impl Into<String>,
        links: Vec<Link>,
        joints: Vec<Joint>,
        frames: Vec<Frame>,
        base: usize,
        roles: Roles,
    ) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidModel(m));
        let nl = links.len();
        if nl == 0 {
            return invalid("model has no links".into());
        }
        if base >= nl {
            return invalid(format!("base index {base} out of range"));
        }
        if joints.len() + 1 != nl {
            return invalid(format!(
                "a tree with {nl} links needs {} joints, found {}",
                nl - 1,
                joints.len()
            ));
        }
        let mut names = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if names.insert(l.name.as_str(), i).is_some() {
                return invalid(format!("duplicate link name `{}`", l.name));
            }
            l.shape
                .validate()
                .map_err(|e| Error::InvalidModel(format!("link `{}`: {e}", l.name)))?;
            l.hardware
                .validate()
                .map_err(|e| Error::InvalidModel(format!("link `{}`: {e}", l.name)))?;
        }
        let mut parent_joint = vec![None; nl];
        for (j, jt) in joints.iter().enumerate() {
            if jt.parent >= nl || jt.child >= nl {
                return invalid(format!("joint `{}` references a missing link", jt.name));
            }
            if jt.child == base {
                return invalid(format!("joint `{}` makes the base a child", jt.name));
            }
            if parent_joint[jt.child].is_some() {
                return invalid(format!(
                    "link `{}` has more than one parent",
                    links[jt.child].name
                ));
            }
            let n = jt.axis.norm();
            if (n - 1.0).abs() > 1e-9 {
                return invalid(format!("joint `{}` axis must be a unit vector", jt.name));
            }
            if !(jt.limits.0 <= jt.limits.1) {
                return invalid(format!("joint `{}` has inverted limits", jt.name));
            }
            parent_joint[jt.child] = Some(j);
        }
        // Breadth-first from the base; anything unreached sits on a cycle.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); nl];
        for (j, jt) in joints.iter().enumerate() {
            children[jt.parent].push(j);
        }
        let mut order = Vec::with_capacity(joints.len());
        let mut queue = std::collections::VecDeque::from([base]);
        while let Some(l) = queue.pop_front() {
            for &j in &children[l] {
                order.push(j);
                queue.push_back(joints[j].child);
            }
        }
        if order.len() != joints.len() {
            return invalid("kinematic graph is not a tree rooted at the base".into());
        }
        let mut frame_names = std::collections::HashSet::new();
        for f in &frames {
            if f.link >= nl {
                return invalid(format!("frame `{}` references a missing link", f.name));
            }
            if names.contains_key(f.name.as_str()) || !frame_names.insert(f.name.as_str()) {
                return invalid(format!("duplicate frame name `{}`", f.name));
            }
        }
        let model = Self {
            name: name.into(),
            links,
            joints,
            frames,
            base,
            roles,
            parent_joint,
            order,
        };
        for role in [
            &model.roles.left_hand,
            &model.roles.right_hand,
            &model.roles.left_foot,
            &model.roles.right_foot,
        ]
        .into_iter()
        .flatten()
        {
            model.frame_index(role)?;
        }
        Ok(model)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn parent_joint(&self, link: usize) -> Option<usize> {
        self.parent_joint[link]
    }

    pub fn joint_order(&self) -> &[usize] {
        &self.order
    }

    pub fn link_index(&self, name: &str) -> Result<usize> {
        self.links
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLink(name.to_string()))
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Resolves a frame or link name.
    pub fn frame_index(&self, name: &str) -> Result<FrameRef> {
        if let Some(i) = self.frames.iter().position(|f| f.name == name) {
            return Ok(FrameRef::Frame(i));
        }
        if let Some(i) = self.links.iter().position(|l| l.name == name) {
            return Ok(FrameRef::Link(i));
        }
        Err(Error::UnknownFrame(name.to_string()))
    }

    pub fn frame_link(&self, f: FrameRef) -> usize {
        match f {
            FrameRef::Link(l) => l,
            FrameRef::Frame(i) => self.frames[i].link,
        }
    }

    /// Joints on the path from the base to `link`.
    pub fn support(&self, link: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut l = link;
        while let Some(j) = self.parent_joint[l] {
            out.push(j);
            l = self.joints[j].parent;
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.links
            .iter()
            .map(|l| crate::shapes::closed_form(&l.shape, l.hardware.length_multiplier, l.hardware.density).0)
            .sum()
    }

    /// Names of the hardware parameter groups, sorted.
    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.links.iter().filter_map(|l| l.group.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// Current hardware parameters of every group (taken from its first link).
    pub fn hardware(&self) -> HardwareParams {
        let mut p = HardwareParams::default();
        for l in &self.links {
            if let Some(g) = &l.group {
                p.entries.entry(g.clone()).or_insert(l.hardware);
            }
        }
        p
    }

    /// Joint offset after length scaling by the parent link.
    pub fn scaled_joint_offset(&self, j: usize) -> Vec3 {
        let jt = &self.joints[j];
        let parent = &self.links[jt.parent];
        scale_along(&jt.offset, parent.axis, parent.hardware.length_multiplier)
    }

    pub fn scaled_frame_offset(&self, f: usize) -> Vec3 {
        let fr = &self.frames[f];
        let link = &self.links[fr.link];
        scale_along(&fr.offset, link.axis, link.hardware.length_multiplier)
    }

    pub fn joint_limits(&self) -> Vec<(f64, f64)> {
        self.joints.iter().map(|j| j.limits).collect()
    }
}

/// Scales the component of `v` along `axis` by `lm`.
pub fn scale_along(v: &Vec3, axis: PrincipalAxis, lm: f64) -> Vec3 {
    let a = axis.unit();
    v + a * ((lm - 1.0) * v.dot(&a))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameRef {
    Link(usize),
    Frame(usize),
}

/// Hardware parameters `π`: per-group density and length multiplier.
/// Groups absent from the map keep their nominal values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams {
    pub entries: BTreeMap<String, LinkHardware>,
}

impl HardwareParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, group: impl Into<String>, density: f64, length_multiplier: f64) -> Self {
        self.entries.insert(
            group.into(),
            LinkHardware {
                density,
                length_multiplier,
            },
        );
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareBounds {
    pub length_multiplier: (f64, f64),
    pub density: (f64, f64),
}

impl Default for HardwareBounds {
    fn default() -> Self {
        Self {
            length_multiplier: (0.5, 2.0),
            density: (500.0, 8000.0),
        }
    }
}

/// Returns a copy of `model` with the hardware of every referenced group (or
/// link name) replaced. Joint and frame offsets scale lazily through
/// [`Model::scaled_joint_offset`] and the kinematics.
pub fn apply_hardware(model: &Model, params: &HardwareParams, bounds: &HardwareBounds) -> Result<Model> {
    let mut out = model.clone();
    for (key, hw) in &params.entries {
        check_bound("length_multiplier", key, hw.length_multiplier, bounds.length_multiplier)?;
        check_bound("density", key, hw.density, bounds.density)?;
        let mut hit = false;
        for link in out.links.iter_mut() {
            if link.group.as_deref() == Some(key.as_str()) || link.name == *key {
                link.hardware = *hw;
                hit = true;
            }
        }
        if !hit {
            return Err(Error::UnknownLink(key.clone()));
        }
    }
    Ok(out)
}

fn check_bound(what: &str, key: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            name: format!("{key}.{what}"),
            value: v,
            lo,
            hi,
        })
    }
}
