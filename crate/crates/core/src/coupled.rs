//! Statics of two agents jointly holding a payload while standing on the
//! ground.
//!
//! The composite velocity is `[ν₁; ν₂; ν₃]` (first agent, second agent,
//! payload). Every contact is a rigid 6-DoF weld. Wrenches are world-aligned
//! and act at the contact point; their order is: first agent left/right
//! foot, second agent left/right foot, first agent left/right grasp, second
//! agent left/right grasp.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3, LU, Dyn};

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, Kinematics, Mechanism};
use crate::model::{apply_hardware, HardwareBounds, HardwareParams, Model};
use crate::scalar::Real;
use crate::spatial::{FrameTag, Wrench};

/// Minimum normal force for a foot to count as loaded (N).
pub const MIN_NORMAL_FORCE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSystem {
    /// Human first, robot second.
    pub agents: [Model; 2],
    pub payload: Model,
    /// Payload frame welded to each agent's left and right hand.
    pub grasp_frames: [[String; 2]; 2],
}

/// One row block of the coupling matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContactLabel {
    pub agent: usize,
    /// Agent frame name (sole or hand).
    pub frame: String,
    /// Payload frame for grasps.
    pub payload_frame: Option<String>,
}

impl ContactLabel {
    pub fn is_grasp(&self) -> bool {
        self.payload_frame.is_some()
    }
}

impl std::fmt::Display for ContactLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.payload_frame {
            Some(p) => write!(f, "agent{}.{}~payload.{}", self.agent + 1, self.frame, p),
            None => write!(f, "agent{}.{}~ground", self.agent + 1, self.frame),
        }
    }
}

const AXES: [&str; 6] = ["fx", "fy", "fz", "tx", "ty", "tz"];

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledConfiguration<T: Real = f64> {
    pub agents: [Configuration<T>; 2],
    pub payload: Configuration<T>,
}

impl CoupledConfiguration<f64> {
    pub fn lift<T: Real>(&self) -> CoupledConfiguration<T> {
        CoupledConfiguration {
            agents: [self.agents[0].lift(), self.agents[1].lift()],
            payload: self.payload.lift(),
        }
    }
}

impl CoupledSystem {
    pub fn new(human: Model, robot: Model, payload: Model, grasp_frames: [[String; 2]; 2]) -> Result<Self> {
        let sys = Self {
            agents: [human, robot],
            payload,
            grasp_frames,
        };
        if sys.payload.dof() != 0 {
            return Err(Error::InvalidModel("payload must be a single rigid body".into()));
        }
        for c in sys.contacts() {
            let model = &sys.agents[c.agent];
            if c.frame.is_empty() {
                return Err(Error::InvalidModel(format!("{} lacks hand or foot frames", model.name)));
            }
            model.frame_index(&c.frame)?;
            if let Some(p) = &c.payload_frame {
                sys.payload.frame_index(p)?;
            }
        }
        Ok(sys)
    }

    pub fn with_robot_hardware(&self, params: &HardwareParams, bounds: &HardwareBounds) -> Result<Self> {
        let mut out = self.clone();
        out.agents[1] = apply_hardware(&self.agents[1], params, bounds)?;
        Ok(out)
    }

    /// Contacts in wrench order.
    pub fn contacts(&self) -> Vec<ContactLabel> {
        let role = |r: &Option<String>| r.clone().unwrap_or_default();
        let mut out = Vec::with_capacity(8);
        for (a, m) in self.agents.iter().enumerate() {
            for f in [&m.roles.left_foot, &m.roles.right_foot] {
                out.push(ContactLabel {
                    agent: a,
                    frame: role(f),
                    payload_frame: None,
                });
            }
        }
        for (a, m) in self.agents.iter().enumerate() {
            for (i, h) in [&m.roles.left_hand, &m.roles.right_hand].into_iter().enumerate() {
                out.push(ContactLabel {
                    agent: a,
                    frame: role(h),
                    payload_frame: Some(self.grasp_frames[a][i].clone()),
                });
            }
        }
        out
    }

    /// Human-readable names of the rows of `Q`.
    pub fn row_labels(&self) -> Vec<String> {
        self.contacts()
            .iter()
            .flat_map(|c| AXES.iter().map(move |a| format!("{c}:{a}")))
            .collect()
    }

    pub fn dims(&self) -> CoupledDims {
        CoupledDims {
            n: [self.agents[0].dof(), self.agents[1].dof()],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.agents[0].total_mass() + self.agents[1].total_mass() + self.payload.total_mass()
    }

    pub fn mechanisms(&self) -> CoupledMechanism<f64> {
        CoupledMechanism {
            agents: [Mechanism::from_model(&self.agents[0]), Mechanism::from_model(&self.agents[1])],
            payload: Mechanism::from_model(&self.payload),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoupledDims {
    pub n: [usize; 2],
}

impl CoupledDims {
    /// Column offset of each subsystem's velocity block.
    pub fn offset(&self, sub: usize) -> usize {
        match sub {
            0 => 0,
            1 => self.n[0] + 6,
            _ => self.n[0] + self.n[1] + 12,
        }
    }

    pub fn velocity(&self) -> usize {
        self.n[0] + self.n[1] + 18
    }

    pub fn torques(&self) -> usize {
        self.n[0] + self.n[1]
    }

    /// Composite row of actuated joint `k` of the stacked torque vector.
    pub fn actuated_row(&self, k: usize) -> usize {
        if k < self.n[0] {
            6 + k
        } else {
            self.offset(1) + 6 + (k - self.n[0])
        }
    }

    pub fn selector(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.velocity(), self.torques());
        for k in 0..self.torques() {
            b[(self.actuated_row(k), k)] = 1.0;
        }
        b
    }
}

#[derive(Clone, Debug)]
pub struct CoupledMechanism<T: Real> {
    pub agents: [Mechanism<T>; 2],
    pub payload: Mechanism<T>,
}

/// Kinematic and static quantities of one coupled configuration.
#[derive(Clone, Debug)]
pub struct Assembly<T: Real> {
    pub kin: [Kinematics<T>; 2],
    pub payload_kin: Kinematics<T>,
    /// Coupling matrix `Q`.
    pub coupling: DMatrix<T>,
    /// Stacked generalized gravity `𝐠`.
    pub gravity: DVector<T>,
    /// World rotation of each contact frame, in wrench order.
    pub contact_rotation: Vec<Matrix3<T>>,
    pub contact_position: Vec<Vector3<T>>,
}

pub fn assemble<T: Real>(sys: &CoupledSystem, mech: &CoupledMechanism<T>, q: &CoupledConfiguration<T>) -> Assembly<T> {
    let dims = sys.dims();
    let kin = [
        Kinematics::compute(&sys.agents[0], &mech.agents[0], &q.agents[0]),
        Kinematics::compute(&sys.agents[1], &mech.agents[1], &q.agents[1]),
    ];
    let payload_kin = Kinematics::compute(&sys.payload, &mech.payload, &q.payload);
    let contacts = sys.contacts();
    let nv = dims.velocity();
    let mut coupling = DMatrix::<T>::zeros(6 * contacts.len(), nv);
    let mut contact_rotation = Vec::with_capacity(contacts.len());
    let mut contact_position = Vec::with_capacity(contacts.len());
    for (c, label) in contacts.iter().enumerate() {
        let a = label.agent;
        let model = &sys.agents[a];
        let f = model.frame_index(&label.frame).expect("contact frames are validated");
        let (r, p) = kin[a].frame_pose(model, &mech.agents[a], f);
        let jac = kin[a].point_jacobian(model, model.frame_link(f), &p);
        let off = dims.offset(a);
        for row in 0..6 {
            for col in 0..jac.ncols() {
                coupling[(6 * c + row, off + col)] = jac[(row, col)];
            }
        }
        if label.is_grasp() {
            let jp = payload_kin.point_jacobian(&sys.payload, sys.payload.base, &p);
            let off = dims.offset(2);
            for row in 0..6 {
                for col in 0..6 {
                    coupling[(6 * c + row, off + col)] = -jp[(row, col)];
                }
            }
        }
        contact_rotation.push(r);
        contact_position.push(p);
    }
    let mut gravity = DVector::<T>::zeros(nv);
    let g1 = kin[0].gravity(&sys.agents[0], &mech.agents[0]);
    let g2 = kin[1].gravity(&sys.agents[1], &mech.agents[1]);
    let g3 = payload_kin.gravity(&sys.payload, &mech.payload);
    gravity.rows_mut(dims.offset(0), g1.len()).copy_from(&g1);
    gravity.rows_mut(dims.offset(1), g2.len()).copy_from(&g2);
    gravity.rows_mut(dims.offset(2), 6).copy_from(&g3);
    Assembly {
        kin,
        payload_kin,
        coupling,
        gravity,
        contact_rotation,
        contact_position,
    }
}

/// `Q(q)`.
pub fn coupling_matrix(sys: &CoupledSystem, q: &CoupledConfiguration) -> DMatrix<f64> {
    assemble(sys, &sys.mechanisms(), q).coupling
}

/// Block-diagonal `𝐌`, stacked `𝐠` and selector `𝐁`.
pub fn composite_matrices(sys: &CoupledSystem, q: &CoupledConfiguration) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let mech = sys.mechanisms();
    let asm = assemble(sys, &mech, q);
    let dims = sys.dims();
    let mut m = DMatrix::zeros(dims.velocity(), dims.velocity());
    for a in 0..2 {
        let ma = asm.kin[a].mass_matrix(&sys.agents[a], &mech.agents[a]);
        let o = dims.offset(a);
        m.view_mut((o, o), (ma.nrows(), ma.ncols())).copy_from(&ma);
    }
    let mp = asm.payload_kin.mass_matrix(&sys.payload, &mech.payload);
    let o = dims.offset(2);
    m.view_mut((o, o), (6, 6)).copy_from(&mp);
    (m, asm.gravity, dims.selector())
}

/// Rows of `a` that are (numerically) linear combinations of earlier rows.
fn dependent_rows(a: &DMatrix<f64>) -> Vec<usize> {
    let scale = a.amax().max(1.0);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        let mut v: DVector<f64> = a.row(i).transpose();
        for b in &basis {
            let c = v.dot(b);
            v -= b * c;
        }
        let n = v.norm();
        if n <= 1e-9 * scale {
            out.push(i);
        } else {
            basis.push(v / n);
        }
    }
    out
}

fn singular_error(labels: &[String], q: &DMatrix<f64>) -> Error {
    let rows = dependent_rows(q);
    let rows = if rows.is_empty() { (0..q.nrows()).collect() } else { rows };
    Error::SingularConstraint {
        rows: rows.into_iter().map(|r| labels.get(r).cloned().unwrap_or_else(|| format!("row {r}"))).collect(),
    }
}

fn labels_or_indices(labels: Option<&[String]>, n: usize) -> Vec<String> {
    labels.map(<[String]>::to_vec).unwrap_or_else(|| (0..n).map(|r| format!("row {r}")).collect())
}

/// `Λ⁻¹ = Q M⁻¹ Qᵀ` factors, shared by the projector and the wrenches.
struct Operational {
    minv_qt: DMatrix<f64>,
    lambda_inv: LU<f64, Dyn, Dyn>,
}

fn operational(m: &DMatrix<f64>, q: &DMatrix<f64>, labels: &[String]) -> Result<Operational> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateModel("mass matrix is not positive definite".into()))?;
    let minv_qt = chol.solve(&q.transpose());
    let li = q * &minv_qt;
    let lu = li.clone().lu();
    let d = lu.u().diagonal().abs();
    let (lo, hi) = (d.min(), d.max());
    if !(lo > 1e-12 * hi) {
        return Err(singular_error(labels, q));
    }
    Ok(Operational {
        minv_qt,
        lambda_inv: lu,
    })
}

/// `𝐍_Λ = 𝟙 − Qᵀ (Q M⁻¹ Qᵀ)⁻¹ Q M⁻¹`.
pub fn nullspace_projector(m: &DMatrix<f64>, q: &DMatrix<f64>, labels: Option<&[String]>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if q.nrows() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let labels = labels_or_indices(labels, q.nrows());
    let op = operational(m, q, &labels)?;
    // Qᵀ Λ (M⁻¹Qᵀ)ᵀ
    let x = op
        .lambda_inv
        .solve(&op.minv_qt.transpose())
        .ok_or_else(|| singular_error(&labels, q))?;
    Ok(DMatrix::identity(n, n) - q.transpose() * x)
}

/// Moore–Penrose inverse with singular values below `1e-8·σ_max` dropped.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(1e-8 * smax).expect("both factors were computed")
}

/// Static joint torques `τ = (𝐍_Λ𝐁)† 𝐍_Λ 𝐠` for human and robot, stacked.
pub fn static_torques(sys: &CoupledSystem, q: &CoupledConfiguration) -> Result<DVector<f64>> {
    let (m, g, b) = composite_matrices(sys, q);
    let qm = coupling_matrix(sys, q);
    let n = nullspace_projector(&m, &qm, Some(&sys.row_labels()))?;
    Ok(pseudo_inverse(&(&n * &b)) * (&n * g))
}

/// Contact wrenches `f = (Q M⁻¹ Qᵀ)⁻¹ Q M⁻¹ (𝐠 − 𝐁τ)`, stacked in contact order.
pub fn contact_wrenches(sys: &CoupledSystem, q: &CoupledConfiguration, tau: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, g, b) = composite_matrices(sys, q);
    let qm = coupling_matrix(sys, q);
    let labels = sys.row_labels();
    let op = operational(&m, &qm, &labels)?;
    let rhs = op.minv_qt.transpose() * (g - b * tau);
    op.lambda_inv.solve(&rhs).ok_or_else(|| singular_error(&labels, &qm))
}

/// `[−τ_y/f_z, τ_x/f_z]` of a wrench expressed in the sole frame.
pub fn center_of_pressure(w: &Wrench) -> Result<Vector2<f64>> {
    let fz = w.force[2];
    if !(fz > MIN_NORMAL_FORCE) {
        return Err(Error::UnloadedFoot {
            frame: match &w.frame {
                FrameTag::World => "world".into(),
                FrameTag::Named(n) => n.clone(),
            },
            fz,
        });
    }
    Ok(Vector2::new(-w.torque[1] / fz, w.torque[0] / fz))
}

/// Contact wrench `c` of the stacked vector, re-expressed in the contact
/// frame's own axes.
pub fn local_wrench<T: Real>(f: &DVector<T>, rotation: &Matrix3<T>, c: usize) -> (Vector3<T>, Vector3<T>) {
    let force = Vector3::new(f[6 * c], f[6 * c + 1], f[6 * c + 2]);
    let torque = Vector3::new(f[6 * c + 3], f[6 * c + 4], f[6 * c + 5]);
    (rotation.transpose() * force, rotation.transpose() * torque)
}

/// Minimum-norm static torques from the equilibrium `𝐁τ + Qᵀf = 𝐠`,
/// solved as one saddle-point system. Coincides with the projector route
/// whenever `Q` has full row rank, and supports tangent propagation.
pub struct StaticsKkt {
    lu: LU<f64, Dyn, Dyn>,
    dims: CoupledDims,
    nc: usize,
    pub tau: DVector<f64>,
    pub wrenches: DVector<f64>,
    pub multiplier: DVector<f64>,
}

impl StaticsKkt {
    pub fn solve(dims: CoupledDims, q: &DMatrix<f64>, g: &DVector<f64>, labels: Option<&[String]>) -> Result<Self> {
        let nt = dims.torques();
        let nv = dims.velocity();
        let nc = q.nrows();
        let n = nt + nc + nv;
        let mut k = DMatrix::zeros(n, n);
        for i in 0..nt {
            k[(i, i)] = 1.0;
            let r = dims.actuated_row(i);
            k[(i, nt + nc + r)] = 1.0;
            k[(nt + nc + r, i)] = 1.0;
        }
        k.view_mut((nt, nt + nc), (nc, nv)).copy_from(q);
        k.view_mut((nt + nc, nt), (nv, nc)).copy_from(&q.transpose());
        let lu = k.lu();
        let d = lu.u().diagonal().abs();
        if !(d.min() > 1e-11 * d.max()) {
            return Err(singular_error(&labels_or_indices(labels, nc), q));
        }
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(nt + nc, nv).copy_from(g);
        let x = lu.solve(&rhs).ok_or_else(|| singular_error(&labels_or_indices(labels, nc), q))?;
        Ok(Self {
            tau: x.rows(0, nt).into_owned(),
            wrenches: x.rows(nt, nc).into_owned(),
            multiplier: x.rows(nt + nc, nv).into_owned(),
            lu,
            dims,
            nc,
        })
    }

    /// Directional derivative `(dτ, df)` for perturbations `(dQ, d𝐠)`.
    pub fn tangent(&self, dq: &DMatrix<f64>, dg: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nt = self.dims.torques();
        let nv = self.dims.velocity();
        let nc = self.nc;
        let mut rhs = DVector::zeros(nt + nc + nv);
        rhs.rows_mut(nt, nc).copy_from(&(-(dq * &self.multiplier)));
        rhs.rows_mut(nt + nc, nv).copy_from(&(dg - dq.transpose() * &self.wrenches));
        let x = self.lu.solve(&rhs).expect("factorization was checked");
        (x.rows(0, nt).into_owned(), x.rows(nt, nc).into_owned())
    }
}

/// Torques, wrenches and centers of pressure at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticsResult {
    pub tau: DVector<f64>,
    /// Stacked contact wrenches, world-aligned, at the contact points.
    pub wrenches: DVector<f64>,
    /// Per foot in wrench order; `None` when the foot is unloaded.
    pub cop: Vec<Option<Vector2<f64>>>,
}

impl StaticsResult {
    pub fn agent_torques(&self, dims: CoupledDims, agent: usize) -> DVector<f64> {
        let start = if agent == 0 { 0 } else { dims.n[0] };
        self.tau.rows(start, dims.n[agent]).into_owned()
    }

    /// Wrench `c` as a [`Wrench`] in the contact frame.
    pub fn contact_wrench(&self, asm: &Assembly<f64>, c: usize, frame: &str) -> Wrench {
        let (f, t) = local_wrench(&self.wrenches, &asm.contact_rotation[c], c);
        Wrench::new(f, t, FrameTag::named(frame))
    }
}

/// Full statics through the projector route.
pub fn evaluate_statics(sys: &CoupledSystem, q: &CoupledConfiguration) -> Result<StaticsResult> {
    let tau = static_torques(sys, q)?;
    let wrenches = contact_wrenches(sys, q, &tau)?;
    let asm = assemble(sys, &sys.mechanisms(), q);
    let contacts = sys.contacts();
    let cop = contacts
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_grasp())
        .map(|(i, c)| {
            let (f, t) = local_wrench(&wrenches, &asm.contact_rotation[i], i);
            center_of_pressure(&Wrench::new(f, t, FrameTag::named(c.frame.clone()))).ok()
        })
        .collect();
    Ok(StaticsResult { tau, wrenches, cop })
}
