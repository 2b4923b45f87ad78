//! Report files written by `optimize` and `evaluate`.
//!
//! | file | columns |
//! |---|---|
//! | `torque_norms.csv` | `height, feasible, status, human, robot` (‖τ‖₂ in N·m, empty when infeasible) |
//! | `joint_torques.csv` | `height, agent, joint, torque` |
//! | `boxplot.csv` | `height, agent, min, q1, median, q3, max` over joint torque magnitudes |
//! | `wrenches.csv` | `height, contact, fx, fy, fz, tx, ty, tz` (world-aligned, at the contact point) |
//! | `cop.csv` | `height, foot, x, y` (sole frame) |
//! | `hardware.csv` | `group, lm_before, density_before, lm_after, density_after` |
//! | `decision.csv` | `height, index, value` (decision vector, `height` empty for hardware entries) |
//! | `summary.txt` | the torque table as text |

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use ergodesign::ergo::{HeightReport, Status};
use ergodesign::HardwareParams;

pub const AGENTS: [&str; 2] = ["human", "robot"];

/// One target height of a report.
#[derive(Clone, Debug)]
pub struct HeightRow {
    pub height: f64,
    pub status: Status,
    pub stats: Option<HeightReport>,
}

impl HeightRow {
    pub fn torque_norm(&self, agent: usize) -> Option<f64> {
        self.stats.as_ref().map(|s| if agent == 0 { s.human_torque.norm() } else { s.robot_torque.norm() })
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub joints: [Vec<String>; 2],
    pub rows: Vec<HeightRow>,
    pub hardware_before: HardwareParams,
    pub hardware_after: HardwareParams,
    /// Decision vector of each height, hardware entries last.
    pub decision: Vec<(Option<f64>, Vec<f64>)>,
}

/// Box-plot statistics with linearly interpolated quartiles.
pub fn five_numbers(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]]
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

        let mut w = csv_writer(dir, "torque_norms.csv")?;
        w.write_record(["height", "feasible", "status", "human", "robot"])?;
        for r in &self.rows {
            let norm = |a| r.torque_norm(a).map(num).unwrap_or_default();
            w.write_record([num(r.height), r.stats.is_some().to_string(), r.status.to_string(), norm(0), norm(1)])?;
        }
        w.flush()?;

        let mut w = csv_writer(dir, "joint_torques.csv")?;
        w.write_record(["height", "agent", "joint", "torque"])?;
        let mut b = csv_writer(dir, "boxplot.csv")?;
        b.write_record(["height", "agent", "min", "q1", "median", "q3", "max"])?;
        for r in &self.rows {
            let Some(s) = &r.stats else { continue };
            for (a, tau) in [&s.human_torque, &s.robot_torque].into_iter().enumerate() {
                for (j, t) in tau.iter().enumerate() {
                    w.write_record([num(r.height), AGENTS[a].into(), self.joints[a][j].clone(), num(*t)])?;
                }
                let mags: Vec<f64> = tau.iter().map(|t| t.abs()).collect();
                let mut rec = vec![num(r.height), AGENTS[a].into()];
                rec.extend(five_numbers(&mags).map(num));
                b.write_record(rec)?;
            }
        }
        w.flush()?;
        b.flush()?;

        let mut w = csv_writer(dir, "wrenches.csv")?;
        w.write_record(["height", "contact", "fx", "fy", "fz", "tx", "ty", "tz"])?;
        let mut c = csv_writer(dir, "cop.csv")?;
        c.write_record(["height", "foot", "x", "y"])?;
        for r in &self.rows {
            let Some(s) = &r.stats else { continue };
            for k in &s.contacts {
                let mut rec = vec![num(r.height), k.label.clone()];
                rec.extend(k.force.iter().chain(k.torque.iter()).map(|v| num(*v)));
                w.write_record(rec)?;
            }
            for (f, cop) in s.cop.iter().enumerate() {
                c.write_record([num(r.height), s.contacts[f].label.clone(), num(cop[0]), num(cop[1])])?;
            }
        }
        w.flush()?;
        c.flush()?;

        let mut w = csv_writer(dir, "hardware.csv")?;
        w.write_record(["group", "lm_before", "density_before", "lm_after", "density_after"])?;
        for (g, before) in &self.hardware_before.entries {
            let after = self.hardware_after.entries.get(g).unwrap_or(before);
            w.write_record([
                g.clone(),
                num(before.length_multiplier),
                num(before.density),
                num(after.length_multiplier),
                num(after.density),
            ])?;
        }
        w.flush()?;

        let mut w = csv_writer(dir, "decision.csv")?;
        w.write_record(["height", "index", "value"])?;
        for (h, values) in &self.decision {
            for (i, v) in values.iter().enumerate() {
                w.write_record([h.map(num).unwrap_or_default(), i.to_string(), num(*v)])?;
            }
        }
        w.flush()?;

        std::fs::write(dir.join("summary.txt"), self.summary()).context("cannot write summary.txt")?;
        Ok(())
    }

    /// Torque norms per height as a text table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>8}  {:>12}  {:>12}  status", "height", "human |tau|", "robot |tau|");
        for r in &self.rows {
            let cell = |a| r.torque_norm(a).map(|v| format!("{v:12.4}")).unwrap_or_else(|| format!("{:>12}", "--"));
            let _ = writeln!(s, "{:>8.3}  {}  {}  {}", r.height, cell(0), cell(1), r.status);
        }
        s
    }
}
