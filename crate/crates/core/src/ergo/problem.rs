//! Decision vector, tasks and constraints of the co-design program.
//!
//! For every target height `k` the decision vector holds the human pose
//! (base position, roll/pitch/yaw, joints), the robot pose and the payload
//! pose. The robot hardware parameters follow once, shared by all heights:
//! for each optimized group a length multiplier and a density in t/m³.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coupled::{assemble, local_wrench, CoupledConfiguration, CoupledMechanism, CoupledSystem, StaticsKkt};
use crate::ergo::ipm::{Derivatives, Nlp};
use crate::ergo::scenario::{DerivativeMode, ScenarioSpec};
use crate::error::{Error, Result};
use crate::kinematics::{com_height_at_null, Configuration, Mechanism};
use crate::model::{HardwareParams, Model};
use crate::scalar::{Dual, Real};
use crate::shapes::LinkHardware;
use crate::spatial::{rot_z, rpy_to_matrix};
use crate::templates::payload;

/// Densities are optimized in t/m³.
pub const DENSITY_UNIT: f64 = 1000.0;

/// Heading of the human and the robot base about the vertical.
pub const HEADINGS: [f64; 2] = [0.0, std::f64::consts::PI];

/// Smoothing width of the density preference term inside the solver, kg/m³.
pub const DENSITY_SMOOTHING: f64 = 10.0;

/// Constraint rows per height.
pub const ROWS_PER_HEIGHT: usize = 27;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: [usize; 2],
    pub heights: usize,
    pub groups: usize,
}

impl Layout {
    pub fn per_height(&self) -> usize {
        self.n[0] + self.n[1] + 18
    }

    pub fn height(&self, k: usize) -> usize {
        k * self.per_height()
    }

    /// First index of agent `a`'s pose at height `k`.
    pub fn agent(&self, k: usize, a: usize) -> usize {
        self.height(k) + if a == 0 { 0 } else { self.n[0] + 6 }
    }

    pub fn payload(&self, k: usize) -> usize {
        self.height(k) + self.n[0] + self.n[1] + 12
    }

    pub fn hardware(&self) -> usize {
        self.heights * self.per_height()
    }

    pub fn len(&self) -> usize {
        self.hardware() + 2 * self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-height quantities that carry derivatives.
struct HeightEval<T: Real> {
    residuals: DVector<T>,
    coupling: DMatrix<T>,
    gravity: DVector<T>,
    foot_rotation: [Matrix3<T>; 4],
}

struct Element {
    f: f64,
    c: DVector<f64>,
    grad: DVector<f64>,
    jac: DMatrix<f64>,
}

/// Values of the four tasks at one decision vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskValues {
    /// `‖τ‖²` per height.
    pub torque: Vec<f64>,
    pub density: f64,
    /// Squared CoP deviation per height.
    pub cop: Vec<f64>,
    pub com_height: f64,
}

/// Static quantities at one height, from the saddle-point solve.
pub struct HeightStatics {
    pub kkt: StaticsKkt,
    pub cop: [Vector2<f64>; 4],
    pub local: [(Vector3<f64>, Vector3<f64>); 4],
}

pub struct ErgoProblem {
    pub sys: CoupledSystem,
    pub spec: ScenarioSpec,
    pub layout: Layout,
    /// Optimized group of each robot link.
    link_group: Vec<Option<usize>>,
    nominal: Vec<f64>,
    human_mech: Mechanism<f64>,
}

fn agent_config<T: Real>(v: &[T], heading: f64) -> Configuration<T> {
    Configuration {
        base_position: Vector3::new(v[0], v[1], v[2]),
        base_rotation: rot_z(T::c(heading)) * rpy_to_matrix(v[3], v[4], v[5]),
        joints: DVector::from_column_slice(&v[6..]),
    }
}

fn family(row: usize) -> &'static str {
    match row {
        0..=1 => "load orientation",
        2 => "load height",
        3..=14 => "hand position",
        15..=18 => "foot height",
        _ => "foot orientation",
    }
}

impl ErgoProblem {
    pub fn new(human: Model, robot: Model, spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let load = payload(&spec.payload.dims());
        let grasps = [
            ["a_l".to_string(), "a_r".to_string()],
            ["b_l".to_string(), "b_r".to_string()],
        ];
        let sys = CoupledSystem::new(human, robot, load, grasps)?;
        Self::from_system(sys, spec)
    }

    pub fn from_system(sys: CoupledSystem, spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let robot = &sys.agents[1];
        let mut link_group = vec![None; robot.links.len()];
        let mut nominal = Vec::new();
        for (g, name) in spec.optimized_groups.iter().enumerate() {
            let links: Vec<usize> = (0..robot.links.len())
                .filter(|&i| robot.links[i].group.as_deref() == Some(name.as_str()))
                .collect();
            let Some(&first) = links.first() else {
                return Err(Error::InvalidScenario(format!("robot has no parameter group `{name}`")));
            };
            let hw = robot.links[first].hardware;
            if links.iter().any(|&i| robot.links[i].hardware != hw) {
                return Err(Error::InvalidScenario(format!("links of group `{name}` disagree on hardware")));
            }
            for i in links {
                link_group[i] = Some(g);
            }
            nominal.push(hw.length_multiplier);
            nominal.push(hw.density / DENSITY_UNIT);
        }
        let layout = Layout {
            n: [sys.agents[0].dof(), sys.agents[1].dof()],
            heights: spec.heights.len(),
            groups: spec.optimized_groups.len(),
        };
        let human_mech = Mechanism::from_model(&sys.agents[0]);
        Ok(Self {
            sys,
            spec,
            layout,
            link_group,
            nominal,
            human_mech,
        })
    }

    /// Nominal hardware block of the decision vector.
    pub fn nominal_hardware(&self) -> &[f64] {
        &self.nominal
    }

    /// Decodes the hardware block.
    pub fn hardware(&self, x: &DVector<f64>) -> HardwareParams {
        let h = self.layout.hardware();
        let mut p = HardwareParams::new();
        for (g, name) in self.spec.optimized_groups.iter().enumerate() {
            p.entries.insert(
                name.clone(),
                LinkHardware {
                    length_multiplier: x[h + 2 * g],
                    density: x[h + 2 * g + 1] * DENSITY_UNIT,
                },
            );
        }
        p
    }

    /// The system with the robot hardware of `x` applied.
    pub fn system_at(&self, x: &DVector<f64>) -> Result<CoupledSystem> {
        let mut bounds = self.spec.bounds;
        // Frozen or nominal values may sit outside the optimization box.
        for v in self.nominal.chunks(2) {
            bounds.length_multiplier.0 = bounds.length_multiplier.0.min(v[0]);
            bounds.length_multiplier.1 = bounds.length_multiplier.1.max(v[0]);
            bounds.density.0 = bounds.density.0.min(v[1] * DENSITY_UNIT);
            bounds.density.1 = bounds.density.1.max(v[1] * DENSITY_UNIT);
        }
        self.sys.with_robot_hardware(&self.hardware(x), &bounds)
    }

    pub fn configuration(&self, x: &DVector<f64>, k: usize) -> CoupledConfiguration {
        let xs = x.as_slice();
        let start = self.layout.height(k);
        self.config_generic(&xs[start..start + self.layout.per_height()])
    }

    fn config_generic<T: Real>(&self, xk: &[T]) -> CoupledConfiguration<T> {
        let n = self.layout.n;
        let a = 6 + n[0];
        let b = a + 6 + n[1];
        CoupledConfiguration {
            agents: [agent_config(&xk[..a], HEADINGS[0]), agent_config(&xk[a..b], HEADINGS[1])],
            payload: agent_config(&xk[b..b + 6], 0.0),
        }
    }

    fn robot_mech<T: Real>(&self, pi: &[T]) -> Mechanism<T> {
        let robot = &self.sys.agents[1];
        let mut lm = Vec::with_capacity(robot.links.len());
        let mut rho = Vec::with_capacity(robot.links.len());
        for (i, l) in robot.links.iter().enumerate() {
            match self.link_group[i] {
                Some(g) => {
                    lm.push(pi[2 * g]);
                    rho.push(pi[2 * g + 1] * T::c(DENSITY_UNIT));
                }
                None => {
                    lm.push(T::c(l.hardware.length_multiplier));
                    rho.push(T::c(l.hardware.density));
                }
            }
        }
        Mechanism::build(robot, &lm, &rho)
    }

    fn human_mech<T: Real>(&self) -> Mechanism<T> {
        let m = &self.human_mech;
        let lift3 = |v: &Vec<Vector3<f64>>| v.iter().map(|x| x.map(T::c)).collect();
        let lift33 = |v: &Vec<Matrix3<f64>>| v.iter().map(|x| x.map(T::c)).collect();
        Mechanism {
            mass: m.mass.iter().map(|&v| T::c(v)).collect(),
            com: lift3(&m.com),
            inertia_com: lift33(&m.inertia_com),
            joint_offset: lift3(&m.joint_offset),
            joint_rotation: lift33(&m.joint_rotation),
            joint_axis: lift3(&m.joint_axis),
            frame_offset: lift3(&m.frame_offset),
            frame_rotation: lift33(&m.frame_rotation),
        }
    }

    fn eval_height<T: Real>(&self, k: usize, xk: &[T], pi: &[T]) -> HeightEval<T> {
        let q = self.config_generic(xk);
        let mech = CoupledMechanism {
            agents: [self.human_mech(), self.robot_mech(pi)],
            payload: Mechanism::from_model(&self.sys.payload),
        };
        let asm = assemble(&self.sys, &mech, &q);
        let mut r = DVector::<T>::zeros(ROWS_PER_HEIGHT);
        let rp = q.payload.base_rotation;
        r[0] = rp[(0, 2)];
        r[1] = rp[(1, 2)];
        r[2] = q.payload.base_position[2] - T::c(self.spec.heights[k]);
        let load = &self.sys.payload;
        for c in 0..4 {
            let a = c / 2;
            let frame = load
                .frame_index(&self.sys.grasp_frames[a][c % 2])
                .expect("payload frames are validated");
            let (_, target) = asm.payload_kin.frame_pose(load, &mech.payload, frame);
            let d = asm.contact_position[4 + c] - target;
            for i in 0..3 {
                r[3 + 3 * c + i] = d[i];
            }
        }
        for f in 0..4 {
            r[15 + f] = asm.contact_position[f][2];
            r[19 + 2 * f] = asm.contact_rotation[f][(0, 2)];
            r[20 + 2 * f] = asm.contact_rotation[f][(1, 2)];
        }
        HeightEval {
            residuals: r,
            foot_rotation: [
                asm.contact_rotation[0],
                asm.contact_rotation[1],
                asm.contact_rotation[2],
                asm.contact_rotation[3],
            ],
            coupling: asm.coupling,
            gravity: asm.gravity,
        }
    }

    fn slices<'a>(&self, x: &'a DVector<f64>, k: usize) -> (&'a [f64], &'a [f64]) {
        let xs = x.as_slice();
        let s = self.layout.height(k);
        (&xs[s..s + self.layout.per_height()], &xs[self.layout.hardware()..])
    }

    fn statics_from(&self, e: &HeightEval<f64>) -> Result<HeightStatics> {
        let kkt = StaticsKkt::solve(self.sys.dims(), &e.coupling, &e.gravity, Some(&self.sys.row_labels()))?;
        let contacts = self.sys.contacts();
        let mut cop = [Vector2::zeros(); 4];
        let mut local = [(Vector3::zeros(), Vector3::zeros()); 4];
        for f in 0..4 {
            let (force, torque) = local_wrench(&kkt.wrenches, &e.foot_rotation[f], f);
            if !(force[2] > crate::coupled::MIN_NORMAL_FORCE) {
                return Err(Error::UnloadedFoot {
                    frame: contacts[f].to_string(),
                    fz: force[2],
                });
            }
            cop[f] = Vector2::new(-torque[1] / force[2], torque[0] / force[2]);
            local[f] = (force, torque);
        }
        Ok(HeightStatics { kkt, cop, local })
    }

    /// Statics at height `k` through the saddle-point route.
    pub fn height_statics(&self, x: &DVector<f64>, k: usize) -> Result<HeightStatics> {
        let (xk, pi) = self.slices(x, k);
        self.statics_from(&self.eval_height(k, xk, pi))
    }

    fn cop_cost(&self, cop: &[Vector2<f64>; 4]) -> f64 {
        let t = Vector2::from(self.spec.cop_target);
        cop.iter().map(|c| (c - t).norm_squared()).sum()
    }

    /// Density preference: Σ over optimized links of Π over materials |ρ* − ρ|.
    /// Density preference term. With `eps > 0` each distance is replaced by
    /// `sqrt(d² + eps²)`, which is what the optimizer sees.
    fn density_task<T: Real>(&self, pi: &[T], eps: f64) -> T {
        let mut sum = T::zero();
        for g in self.link_group.iter().flatten() {
            let rho = pi[2 * g + 1] * T::c(DENSITY_UNIT);
            let mut prod = T::one();
            for &p in &self.spec.preferable_densities {
                let d = T::c(p) - rho;
                prod *= if eps > 0.0 { (d * d + T::c(eps * eps)).sqrt() } else { d.abs() };
            }
            sum += prod;
        }
        sum
    }

    fn com_task<T: Real>(&self, pi: &[T]) -> Result<T> {
        let mech = self.robot_mech(pi);
        let z = com_height_at_null(&self.sys.agents[1], &mech);
        if !(z.re() > 0.0) {
            return Err(Error::DegenerateModel(format!("robot center of mass height {} is not positive", z.re())));
        }
        Ok(T::one() / (z * z))
    }

    pub fn tasks(&self, x: &DVector<f64>) -> Result<TaskValues> {
        let pi = &x.as_slice()[self.layout.hardware()..];
        let mut torque = Vec::new();
        let mut cop = Vec::new();
        for k in 0..self.layout.heights {
            let s = self.height_statics(x, k)?;
            torque.push(s.kkt.tau.norm_squared());
            cop.push(self.cop_cost(&s.cop));
        }
        Ok(TaskValues {
            torque,
            density: self.density_task(pi, 0.0),
            cop,
            com_height: self.com_task(pi)?,
        })
    }

    pub fn objective(&self, t: &TaskValues) -> f64 {
        let w = &self.spec.weights;
        let per: f64 = t.torque.iter().zip(&t.cop).map(|(a, b)| w.torque * a + w.cop * b).sum();
        per + w.density * t.density + w.com_height * t.com_height
    }

    /// Constraint residuals of the program (tilt encoding of orientations).
    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut c = DVector::zeros(ROWS_PER_HEIGHT * self.layout.heights);
        for k in 0..self.layout.heights {
            let (xk, pi) = self.slices(x, k);
            let e = self.eval_height(k, xk, pi);
            c.rows_mut(ROWS_PER_HEIGHT * k, ROWS_PER_HEIGHT).copy_from(&e.residuals);
        }
        c
    }

    pub fn family_of(&self, row: usize) -> String {
        let k = row / ROWS_PER_HEIGHT;
        format!("{} at height {} m", family(row % ROWS_PER_HEIGHT), self.spec.heights[k])
    }

    pub fn height_of_row(&self, row: usize) -> f64 {
        self.spec.heights[row / ROWS_PER_HEIGHT]
    }

    fn fixed(&self, l: &DVector<f64>, u: &DVector<f64>, i: usize) -> bool {
        l[i] >= u[i]
    }

    /// Local directions of height `k` (its block, then the hardware block)
    /// that are not fixed.
    fn free_directions(&self, k: usize, l: &DVector<f64>, u: &DVector<f64>) -> Vec<usize> {
        let lay = self.layout;
        let ph = lay.per_height();
        (0..ph + 2 * lay.groups)
            .filter(|&v| !self.fixed(l, u, self.global(k, v)))
            .collect()
    }

    fn global(&self, k: usize, v: usize) -> usize {
        let ph = self.layout.per_height();
        if v < ph {
            self.layout.height(k) + v
        } else {
            self.layout.hardware() + v - ph
        }
    }

    /// Torque and CoP terms of height `k` with their derivatives along the
    /// local directions `dirs`.
    fn element(&self, k: usize, xk: &[f64], pi: &[f64], dirs: &[usize]) -> Result<Element> {
        let ph = self.layout.per_height();
        let w = self.spec.weights;
        let base = self.eval_height(k, xk, pi);
        let s = self.statics_from(&base)?;
        let f = w.torque * s.kkt.tau.norm_squared() + w.cop * self.cop_cost(&s.cop);
        let target = Vector2::from(self.spec.cop_target);
        let cols: Vec<(DVector<f64>, f64)> = dirs
            .par_iter()
            .map(|&v| {
                let mut xd: Vec<Dual> = xk.iter().map(|&a| Dual::constant(a)).collect();
                let mut pd: Vec<Dual> = pi.iter().map(|&a| Dual::constant(a)).collect();
                if v < ph {
                    xd[v].eps = 1.0;
                } else {
                    pd[v - ph].eps = 1.0;
                }
                let e = self.eval_height(k, &xd, &pd);
                let dq = e.coupling.map(|d| d.eps);
                let dg = e.gravity.map(|d| d.eps);
                let (dtau, dw) = s.kkt.tangent(&dq, &dg);
                let mut df = 2.0 * w.torque * s.kkt.tau.dot(&dtau);
                for ft in 0..4 {
                    let r = base.foot_rotation[ft];
                    let dr = e.foot_rotation[ft].map(|d| d.eps);
                    let wr = &s.kkt.wrenches;
                    let fw = Vector3::new(wr[6 * ft], wr[6 * ft + 1], wr[6 * ft + 2]);
                    let tw = Vector3::new(wr[6 * ft + 3], wr[6 * ft + 4], wr[6 * ft + 5]);
                    let dfw = Vector3::new(dw[6 * ft], dw[6 * ft + 1], dw[6 * ft + 2]);
                    let dtw = Vector3::new(dw[6 * ft + 3], dw[6 * ft + 4], dw[6 * ft + 5]);
                    let dfl = dr.transpose() * fw + r.transpose() * dfw;
                    let dtl = dr.transpose() * tw + r.transpose() * dtw;
                    let (fl, tl) = s.local[ft];
                    let fz = fl[2];
                    let dcop = Vector2::new(
                        -(dtl[1] * fz - tl[1] * dfl[2]) / (fz * fz),
                        (dtl[0] * fz - tl[0] * dfl[2]) / (fz * fz),
                    );
                    df += 2.0 * w.cop * (s.cop[ft] - target).dot(&dcop);
                }
                (e.residuals.map(|d| d.eps), df)
            })
            .collect();
        let nl = ph + 2 * self.layout.groups;
        let mut grad = DVector::zeros(nl);
        let mut jac = DMatrix::zeros(ROWS_PER_HEIGHT, nl);
        for (&v, (dres, df)) in dirs.iter().zip(cols) {
            grad[v] = df;
            jac.set_column(v, &dres);
        }
        Ok(Element {
            f,
            c: base.residuals,
            grad,
            jac,
        })
    }

    /// Constraint part of [`Self::element`]; defined where the statics are not.
    fn constraint_element(&self, k: usize, xk: &[f64], pi: &[f64], dirs: &[usize]) -> Element {
        let nl = self.layout.per_height() + 2 * self.layout.groups;
        let ph = self.layout.per_height();
        let mut jac = DMatrix::zeros(ROWS_PER_HEIGHT, nl);
        for &v in dirs {
            let mut xd: Vec<Dual> = xk.iter().map(|&a| Dual::constant(a)).collect();
            let mut pd: Vec<Dual> = pi.iter().map(|&a| Dual::constant(a)).collect();
            if v < ph {
                xd[v].eps = 1.0;
            } else {
                pd[v - ph].eps = 1.0;
            }
            jac.set_column(v, &self.eval_height(k, &xd, &pd).residuals.map(|d| d.eps));
        }
        Element {
            f: 0.0,
            c: self.eval_height(k, xk, pi).residuals,
            grad: DVector::zeros(nl),
            jac,
        }
    }

    /// Density and CoM height terms with their gradient over the hardware block.
    fn hardware_terms(&self, pi: &[f64], free: &[bool]) -> Result<(f64, DVector<f64>)> {
        let w = self.spec.weights;
        let f = w.density * self.density_task(pi, DENSITY_SMOOTHING) + w.com_height * self.com_task(pi)?;
        let mut grad = DVector::zeros(pi.len());
        for g in 0..pi.len() {
            if !free[g] {
                continue;
            }
            let mut pd: Vec<Dual> = pi.iter().map(|&a| Dual::constant(a)).collect();
            pd[g].eps = 1.0;
            grad[g] = w.density * self.density_task(&pd, DENSITY_SMOOTHING).eps + w.com_height * self.com_task(&pd)?.eps;
        }
        Ok((f, grad))
    }

    fn forward_derivatives(&self, x: &DVector<f64>) -> Result<Derivatives> {
        let lay = self.layout;
        let (l, u) = self.bounds();
        let n = lay.len();
        let m = ROWS_PER_HEIGHT * lay.heights;
        let hw = lay.hardware();
        let pi = &x.as_slice()[hw..];
        let free: Vec<bool> = (hw..n).map(|i| !self.fixed(&l, &u, i)).collect();
        let (mut f, gp) = self.hardware_terms(pi, &free)?;
        let mut grad = DVector::zeros(n);
        grad.rows_mut(hw, pi.len()).copy_from(&gp);
        let mut jac = DMatrix::zeros(m, n);
        let mut c = DVector::zeros(m);
        for k in 0..lay.heights {
            let (xk, _) = self.slices(x, k);
            let dirs = self.free_directions(k, &l, &u);
            let e = self.element(k, xk, pi, &dirs)?;
            f += e.f;
            c.rows_mut(ROWS_PER_HEIGHT * k, ROWS_PER_HEIGHT).copy_from(&e.c);
            for &v in &dirs {
                let col = self.global(k, v);
                grad[col] += e.grad[v];
                jac.view_mut((ROWS_PER_HEIGHT * k, col), (ROWS_PER_HEIGHT, 1))
                    .copy_from(&e.jac.column(v));
            }
        }
        Ok(Derivatives { f, grad, c, jac })
    }

    /// Hessian of `σ·f + λᵀc` by differencing the forward-mode gradient of
    /// each height block.
    fn hessian(&self, x: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let lay = self.layout;
        let (l, u) = self.bounds();
        let n = lay.len();
        let hw = lay.hardware();
        let ph = lay.per_height();
        let mut h = DMatrix::zeros(n, n);
        let grad_l = |e: &Element, k: usize| -> DVector<f64> {
            &e.grad * sigma + e.jac.transpose() * lambda.rows(ROWS_PER_HEIGHT * k, ROWS_PER_HEIGHT)
        };
        let mut tasks = Vec::new();
        let mut bases = Vec::new();
        for k in 0..lay.heights {
            let dirs = self.free_directions(k, &l, &u);
            let (xk, pi) = self.slices(x, k);
            let e = if sigma == 0.0 {
                self.constraint_element(k, xk, pi, &dirs)
            } else {
                self.element(k, xk, pi, &dirs)?
            };
            bases.push(grad_l(&e, k));
            for &v in &dirs {
                tasks.push((k, v));
            }
        }
        let cols: Vec<Result<DVector<f64>>> = tasks
            .par_iter()
            .map(|&(k, v)| {
                let dirs = self.free_directions(k, &l, &u);
                let (xk, pi) = self.slices(x, k);
                let mut xk = xk.to_vec();
                let mut pi = pi.to_vec();
                let val = if v < ph { &mut xk[v] } else { &mut pi[v - ph] };
                let step = 1e-7 * val.abs().max(1.0);
                *val += step;
                let e = if sigma == 0.0 {
                    self.constraint_element(k, &xk, &pi, &dirs)
                } else {
                    self.element(k, &xk, &pi, &dirs)?
                };
                Ok((grad_l(&e, k) - &bases[k]) / step)
            })
            .collect();
        for (&(k, v), col) in tasks.iter().zip(cols) {
            let col = col?;
            let j = self.global(k, v);
            for &r in &self.free_directions(k, &l, &u) {
                h[(self.global(k, r), j)] += col[r];
            }
        }
        // Hardware-only terms.
        let pi = &x.as_slice()[hw..];
        let free: Vec<bool> = (hw..n).map(|i| !self.fixed(&l, &u, i)).collect();
        if sigma == 0.0 {
            return Ok((&h + h.transpose()) * 0.5);
        }
        let (_, g0) = self.hardware_terms(pi, &free)?;
        for g in 0..pi.len() {
            if !free[g] {
                continue;
            }
            let mut p = pi.to_vec();
            let step = 1e-7 * p[g].abs().max(1.0);
            p[g] += step;
            let (_, g1) = self.hardware_terms(&p, &free)?;
            let col = (g1 - &g0) * (sigma / step);
            for r in 0..pi.len() {
                h[(hw + r, hw + g)] += col[r];
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    fn central_differences(&self, x: &DVector<f64>) -> Result<Derivatives> {
        let (l, u) = self.bounds();
        let (f, c) = self.evaluate(x)?;
        let n = x.len();
        let cols: Vec<Result<(f64, DVector<f64>)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                if self.fixed(&l, &u, i) {
                    return Ok((0.0, DVector::zeros(c.len())));
                }
                let h = 1e-6 * x[i].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let (fp, cp) = self.evaluate(&xp)?;
                let (fm, cm) = self.evaluate(&xm)?;
                Ok(((fp - fm) / (2.0 * h), (cp - cm) / (2.0 * h)))
            })
            .collect();
        let mut grad = DVector::zeros(n);
        let mut jac = DMatrix::zeros(c.len(), n);
        for (i, r) in cols.into_iter().enumerate() {
            let (g, dc) = r?;
            grad[i] = g;
            jac.set_column(i, &dc);
        }
        Ok(Derivatives { f, grad, c, jac })
    }

    pub fn derivatives_with(&self, x: &DVector<f64>, mode: DerivativeMode) -> Result<Derivatives> {
        match mode {
            DerivativeMode::Forward => self.forward_derivatives(x),
            DerivativeMode::CentralDifferences => self.central_differences(x),
        }
    }

    /// Hand-placed posture for height `k`, not yet feasible.
    fn rough_posture(&self, k: usize) -> DVector<f64> {
        let lay = self.layout;
        let mut x = DVector::zeros(lay.per_height());
        let h = self.spec.heights[k];
        let half = 0.5 * self.spec.payload.size[0];
        for a in 0..2 {
            let model = &self.sys.agents[a];
            let o = lay.agent(0, a);
            let mech = Mechanism::<f64>::from_model(model);
            let hip = com_height_at_null(model, &mech);
            let sign = if a == 0 { -1.0 } else { 1.0 };
            x[o] = sign * (half + 0.35 * hip);
            x[o + 2] = 0.9 * hip;
            let set = |x: &mut DVector<f64>, name: &str, v: f64| {
                if let Some(j) = model.joint_index(name) {
                    x[o + 6 + j] = v;
                }
            };
            for side in ["l", "r"] {
                set(&mut x, &format!("{side}_hip_pitch"), -0.3);
                set(&mut x, &format!("{side}_knee"), 0.6);
                set(&mut x, &format!("{side}_ankle_pitch"), -0.3);
                set(&mut x, &format!("{side}_shoulder_pitch"), -(0.4 + 0.8 * (h / (2.0 * hip)).min(1.0)));
                set(&mut x, &format!("{side}_elbow"), -0.6);
            }
        }
        x[lay.payload(0) + 2] = h;
        x
    }

    /// Gauss–Newton projection of the posture blocks onto the constraints.
    pub fn project(&self, x: &DVector<f64>, iterations: usize) -> DVector<f64> {
        let (l, u) = self.bounds();
        let mut x = x.clone();
        let hw = self.layout.hardware();
        let movable: Vec<usize> = (0..hw).filter(|&i| !self.fixed(&l, &u, i)).collect();
        for _ in 0..iterations {
            let c = self.residuals(&x);
            if c.amax() < 1e-12 {
                break;
            }
            let Ok((_, jac)) = self.constraint_jacobian(&x) else {
                break;
            };
            let j = jac.select_columns(&movable);
            let jjt = &j * j.transpose() + DMatrix::identity(c.len(), c.len()) * 1e-10;
            let Some(y) = jjt.lu().solve(&c) else {
                break;
            };
            let dx = -(j.transpose() * y);
            for (k, &i) in movable.iter().enumerate() {
                let margin = 1e-3 * (u[i] - l[i]).min(1.0);
                x[i] = (x[i] + dx[k]).clamp(l[i] + margin, u[i] - margin);
            }
        }
        x
    }

    /// Feasible warm start at the nominal hardware, perturbed by the seed.
    pub fn warm_start(&self) -> DVector<f64> {
        let lay = self.layout;
        let mut x = DVector::zeros(lay.len());
        for k in 0..lay.heights {
            let p = self.rough_posture(k);
            x.rows_mut(lay.height(k), lay.per_height()).copy_from(&p);
        }
        x.rows_mut(lay.hardware(), self.nominal.len()).copy_from(&DVector::from_column_slice(&self.nominal));
        let mut x = self.project(&x, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        let (l, u) = self.bounds();
        for i in 0..lay.hardware() {
            let d = self.spec.jitter * rng.random_range(-1.0..1.0);
            if !self.fixed(&l, &u, i) {
                x[i] = (x[i] + d).clamp(l[i], u[i]);
            }
        }
        x
    }

    /// Constraint residuals for height `k` with orientations encoded as
    /// `e₃ᵀz − 1` (load, then each foot), stacked as: load orientation, load
    /// height, hand positions (human left/right, robot left/right), foot
    /// heights, foot orientations.
    pub fn constraint_residuals(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        let (xk, pi) = self.slices(x, k);
        let q = self.config_generic::<f64>(xk);
        let e = self.eval_height(k, xk, pi);
        let r = &e.residuals;
        let mut out = DVector::zeros(22);
        out[0] = q.payload.base_rotation[(2, 2)] - 1.0;
        out[1] = r[2];
        out.rows_mut(2, 12).copy_from(&r.rows(3, 12));
        out.rows_mut(14, 4).copy_from(&r.rows(15, 4));
        for f in 0..4 {
            out[18 + f] = e.foot_rotation[f][(2, 2)] - 1.0;
        }
        out
    }
}

impl Nlp for ErgoProblem {
    fn num_variables(&self) -> usize {
        self.layout.len()
    }

    fn num_constraints(&self) -> usize {
        ROWS_PER_HEIGHT * self.layout.heights
    }

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let lay = self.layout;
        let n = lay.len();
        let mut l = DVector::from_element(n, f64::NEG_INFINITY);
        let mut u = DVector::from_element(n, f64::INFINITY);
        let third = std::f64::consts::FRAC_PI_3;
        let pi = std::f64::consts::PI;
        for k in 0..lay.heights {
            for a in 0..2 {
                let o = lay.agent(k, a);
                for (i, b) in [third, third, pi].into_iter().enumerate() {
                    l[o + 3 + i] = -b;
                    u[o + 3 + i] = b;
                }
                for (j, joint) in self.sys.agents[a].joints.iter().enumerate() {
                    l[o + 6 + j] = joint.limits.0;
                    u[o + 6 + j] = joint.limits.1;
                }
            }
            let p = lay.payload(k);
            for i in [0, 1, 5] {
                l[p + i] = 0.0;
                u[p + i] = 0.0;
            }
            for i in [3, 4] {
                l[p + i] = -third;
                u[p + i] = third;
            }
        }
        let h = lay.hardware();
        let b = self.spec.bounds;
        for g in 0..lay.groups {
            if self.spec.freeze_hardware {
                for i in 0..2 {
                    l[h + 2 * g + i] = self.nominal[2 * g + i];
                    u[h + 2 * g + i] = self.nominal[2 * g + i];
                }
            } else {
                l[h + 2 * g] = b.length_multiplier.0;
                u[h + 2 * g] = b.length_multiplier.1;
                l[h + 2 * g + 1] = b.density.0 / DENSITY_UNIT;
                u[h + 2 * g + 1] = b.density.1 / DENSITY_UNIT;
            }
        }
        (l, u)
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut t = self.tasks(x)?;
        t.density = self.density_task(&x.as_slice()[self.layout.hardware()..], DENSITY_SMOOTHING);
        Ok((self.objective(&t), self.residuals(x)))
    }

    fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives> {
        self.derivatives_with(x, self.spec.solver.derivatives)
    }

    fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.residuals(x))
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let lay = self.layout;
        let (l, u) = self.bounds();
        let ph = lay.per_height();
        let np = 2 * lay.groups;
        let mut dirs = Vec::new();
        for k in 0..lay.heights {
            for v in 0..ph + np {
                let col = if v < ph { lay.height(k) + v } else { lay.hardware() + v - ph };
                if !self.fixed(&l, &u, col) {
                    dirs.push((k, v, col));
                }
            }
        }
        let cols: Vec<DVector<f64>> = dirs
            .par_iter()
            .map(|&(k, v, _)| {
                let (xk, pi) = self.slices(x, k);
                let mut xd: Vec<Dual> = xk.iter().map(|&a| Dual::constant(a)).collect();
                let mut pd: Vec<Dual> = pi.iter().map(|&a| Dual::constant(a)).collect();
                if v < ph {
                    xd[v].eps = 1.0;
                } else {
                    pd[v - ph].eps = 1.0;
                }
                self.eval_height(k, &xd, &pd).residuals.map(|d| d.eps)
            })
            .collect();
        let mut jac = DMatrix::zeros(self.num_constraints(), lay.len());
        for (&(k, _, col), d) in dirs.iter().zip(cols) {
            jac.view_mut((ROWS_PER_HEIGHT * k, col), (ROWS_PER_HEIGHT, 1)).copy_from(&d);
        }
        Ok((self.residuals(x), jac))
    }

    fn constraint_family(&self, row: usize) -> String {
        self.family_of(row)
    }

    fn lagrangian_hessian(&self, x: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        Some(self.hessian(x, sigma, lambda))
    }
}
