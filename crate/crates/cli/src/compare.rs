//! Side-by-side comparison of two torque-norm tables.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::report::AGENTS;

/// Human torque changes within this fraction count as preserved.
pub const HUMAN_BAND: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct NormRow {
    pub height: f64,
    pub feasible: bool,
    #[serde(default)]
    pub status: String,
    pub human: Option<f64>,
    pub robot: Option<f64>,
}

impl NormRow {
    pub fn norm(&self, agent: usize) -> Option<f64> {
        if agent == 0 {
            self.human
        } else {
            self.robot
        }
    }
}

/// Reads `torque_norms.csv`, from a report directory or the file itself.
pub fn read_norms(path: &Path) -> Result<Vec<NormRow>> {
    let file = if path.is_dir() { path.join("torque_norms.csv") } else { path.to_path_buf() };
    let mut r = csv::Reader::from_path(&file).with_context(|| format!("cannot read {}", file.display()))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<NormRow>, _>>()
        .with_context(|| format!("malformed torque table {}", file.display()))?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub height: f64,
    pub agent: &'static str,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `100·(b − a)/a`, when both are present.
    pub change_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Heights where the robot torque drops while the human torque stays
    /// within [`HUMAN_BAND`].
    pub flagged: Vec<f64>,
}

impl Comparison {
    pub fn change(&self, height: f64, agent: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.height == height && r.agent == agent)
            .and_then(|r| r.change_percent)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>8}  {:<6}  {:>12}  {:>12}  {:>9}", "height", "agent", "a", "b", "change");
        for r in &self.rows {
            let cell = |v: Option<f64>| v.map(|v| format!("{v:12.4}")).unwrap_or_else(|| format!("{:>12}", "--"));
            let change = r.change_percent.map(|c| format!("{c:+8.2}%")).unwrap_or_else(|| format!("{:>9}", "--"));
            let flag = if r.agent == "robot" && self.flagged.contains(&r.height) { "  *" } else { "" };
            let _ = writeln!(s, "{:>8.3}  {:<6}  {}  {}  {}{}", r.height, r.agent, cell(r.a), cell(r.b), change, flag);
        }
        if !self.flagged.is_empty() {
            let _ = writeln!(
                s,
                "* robot torque reduced with human torque within ±{:.0}%",
                HUMAN_BAND * 100.0
            );
        }
        s
    }
}

pub fn compare(a: &[NormRow], b: &[NormRow]) -> Result<Comparison> {
    let heights = |rows: &[NormRow]| rows.iter().map(|r| r.height).collect::<Vec<_>>();
    if heights(a) != heights(b) {
        bail!("reports cover different heights: {:?} vs {:?}", heights(a), heights(b));
    }
    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for (ra, rb) in a.iter().zip(b) {
        let mut change = [None; 2];
        for (agent, name) in AGENTS.iter().enumerate() {
            let (va, vb) = (ra.norm(agent), rb.norm(agent));
            change[agent] = match (va, vb) {
                (Some(x), Some(y)) if x != 0.0 => Some(100.0 * (y - x) / x),
                (Some(x), Some(y)) if x == y => Some(0.0),
                _ => None,
            };
            rows.push(ComparisonRow {
                height: ra.height,
                agent: name,
                a: va,
                b: vb,
                change_percent: change[agent],
            });
        }
        if let [Some(h), Some(r)] = change {
            if r < 0.0 && h.abs() <= 100.0 * HUMAN_BAND {
                flagged.push(ra.height);
            }
        }
    }
    Ok(Comparison { rows, flagged })
}
