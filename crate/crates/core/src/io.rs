//! TOML model and scenario files.
//!
//! Links, joints and frames refer to each other by name. Floats are written
//! with shortest round-trip formatting, so `save` followed by `load` gives
//! back the same numbers bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ergo::ScenarioSpec;
use crate::error::{Error, Result};
use crate::model::{Frame, Joint, JointKind, Link, Model, PrincipalAxis, Roles};
use crate::shapes::{LinkHardware, Shape};
use crate::spatial::{Mat3, Vec3};
use crate::templates;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub name: String,
    pub shape: Shape,
    pub density: f64,
    #[serde(default = "one")]
    pub length_multiplier: f64,
    pub axis: PrincipalAxis,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub offset: [f64; 3],
    #[serde(default = "identity", skip_serializing_if = "is_identity")]
    pub rotation: [[f64; 3]; 3],
    pub limits: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub name: String,
    pub link: String,
    #[serde(default)]
    pub offset: [f64; 3],
    #[serde(default = "identity", skip_serializing_if = "is_identity")]
    pub rotation: [[f64; 3]; 3],
}

/// On-disk form of a [`Model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub base: String,
    #[serde(default)]
    pub roles: Roles,
    pub links: Vec<LinkEntry>,
    #[serde(default)]
    pub joints: Vec<JointEntry>,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
}

fn one() -> f64 {
    1.0
}

fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn is_identity(r: &[[f64; 3]; 3]) -> bool {
    *r == identity()
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

fn from_rows(r: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| r[i][j])
}

impl ModelFile {
    pub fn from_model(m: &Model) -> Self {
        let link_name = |i: usize| m.links[i].name.clone();
        Self {
            name: m.name.clone(),
            base: link_name(m.base),
            roles: m.roles.clone(),
            links: m
                .links
                .iter()
                .map(|l| LinkEntry {
                    name: l.name.clone(),
                    shape: l.shape,
                    density: l.hardware.density,
                    length_multiplier: l.hardware.length_multiplier,
                    axis: l.axis,
                    origin: l.origin.into(),
                    group: l.group.clone(),
                })
                .collect(),
            joints: m
                .joints
                .iter()
                .map(|j| JointEntry {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: link_name(j.parent),
                    child: link_name(j.child),
                    axis: j.axis.into(),
                    offset: j.offset.into(),
                    rotation: rows(&j.rotation),
                    limits: [j.limits.0, j.limits.1],
                })
                .collect(),
            frames: m
                .frames
                .iter()
                .map(|f| FrameEntry {
                    name: f.name.clone(),
                    link: link_name(f.link),
                    offset: f.offset.into(),
                    rotation: rows(&f.rotation),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let index = |name: &str, what: &str| {
            self.links
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| Error::InvalidModel(format!("{what} refers to unknown link `{name}`")))
        };
        let mut links = Vec::with_capacity(self.links.len());
        for l in &self.links {
            let hw = LinkHardware {
                density: l.density,
                length_multiplier: l.length_multiplier,
            };
            hw.validate()
                .map_err(|e| Error::InvalidModel(format!("link `{}`: {}", l.name, inner(&e))))?;
            l.shape
                .validate()
                .map_err(|e| Error::InvalidModel(format!("link `{}`: {}", l.name, inner(&e))))?;
            links.push(Link {
                name: l.name.clone(),
                shape: l.shape,
                hardware: hw,
                axis: l.axis,
                origin: Vec3::from(l.origin),
                group: l.group.clone(),
            });
        }
        let mut joints = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            joints.push(Joint {
                name: j.name.clone(),
                kind: j.kind,
                parent: index(&j.parent, &format!("joint `{}`", j.name))?,
                child: index(&j.child, &format!("joint `{}`", j.name))?,
                axis: Vec3::from(j.axis),
                offset: Vec3::from(j.offset),
                rotation: from_rows(&j.rotation),
                limits: (j.limits[0], j.limits[1]),
            });
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            frames.push(Frame {
                name: f.name.clone(),
                link: index(&f.link, &format!("frame `{}`", f.name))?,
                offset: Vec3::from(f.offset),
                rotation: from_rows(&f.rotation),
            });
        }
        let base = index(&self.base, "base")?;
        Model::new(self.name.clone(), links, joints, frames, base, self.roles.clone())
    }
}

fn inner(e: &Error) -> String {
    match e {
        Error::InvalidHardware(m) | Error::InvalidShape(m) => m.clone(),
        other => other.to_string(),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        message: e.to_string(),
    })
}

pub fn model_from_str(text: &str) -> Result<Model> {
    parse::<ModelFile>(text, "<string>")?.to_model()
}

pub fn model_to_string(model: &Model) -> String {
    toml::to_string(&ModelFile::from_model(model)).expect("model files always serialize")
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    parse::<ModelFile>(&read(path)?, &path.display().to_string())?
        .to_model()
        .map_err(|e| match e {
            Error::InvalidModel(m) => Error::InvalidModel(format!("{}: {m}", path.display())),
            other => other,
        })
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &model_to_string(model))
}

/// Where an agent model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentSource {
    /// A model file, relative to the scenario file.
    File(PathBuf),
    /// The bundled human template at the given stature (m).
    Human(f64),
    DeskRobot,
}

/// On-disk scenario: the two agents and the optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub human: AgentSource,
    pub robot: AgentSource,
    #[serde(default)]
    pub scenario: ScenarioSpec,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            human: AgentSource::Human(1.82),
            robot: AgentSource::DeskRobot,
            scenario: ScenarioSpec::default(),
        }
    }
}

/// A scenario with its agent models resolved.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub human: Model,
    pub robot: Model,
    pub spec: ScenarioSpec,
}

impl ScenarioFile {
    pub fn resolve(&self, dir: &Path) -> Result<Scenario> {
        self.scenario.validate()?;
        let load = |s: &AgentSource| -> Result<Model> {
            match s {
                AgentSource::File(p) => load_model(dir.join(p)),
                AgentSource::Human(stature) if *stature > 0.0 => Ok(templates::human(*stature)),
                AgentSource::Human(stature) => Err(Error::InvalidScenario(format!("stature must be positive, got {stature}"))),
                AgentSource::DeskRobot => Ok(templates::desk_robot()),
            }
        };
        Ok(Scenario {
            human: load(&self.human)?,
            robot: load(&self.robot)?,
            spec: self.scenario.clone(),
        })
    }
}

pub fn scenario_from_str(text: &str) -> Result<ScenarioFile> {
    parse(text, "<string>")
}

pub fn scenario_to_string(s: &ScenarioFile) -> String {
    toml::to_string(s).expect("scenario files always serialize")
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let file: ScenarioFile = parse(&read(path)?, &path.display().to_string())?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}
