//! Primal-dual interior-point method for
//!
//! ```text
//!   min f(x)  s.t.  c(x) = 0,  l ≤ x ≤ u
//! ```
//!
//! using the Lagrangian Hessian when the problem provides one and a damped
//! BFGS approximation otherwise, a filter line search with second-order
//! corrections, and an elastic feasibility restoration phase that also
//! detects locally infeasible problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Objective, constraints and first derivatives at one point.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub f: f64,
    pub grad: DVector<f64>,
    pub c: DVector<f64>,
    pub jac: DMatrix<f64>,
}

pub trait Nlp: Sync {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn bounds(&self) -> (DVector<f64>, DVector<f64>);
    fn evaluate(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
    fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives>;

    /// Constraints alone; must not fail where only the objective would.
    fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.evaluate(x).map(|(_, c)| c)
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.derivatives(x).map(|d| (d.c, d.jac))
    }

    fn constraint_family(&self, row: usize) -> String {
        format!("constraint {row}")
    }

    /// Hessian of `σ·f(x) + λᵀc(x)`, if available.
    fn lagrangian_hessian(&self, _x: &DVector<f64>, _sigma: f64, _lambda: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpOptions {
    pub max_iter: usize,
    /// Scaled KKT tolerance.
    pub tol: f64,
    /// Absolute constraint violation tolerance.
    pub constr_tol: f64,
    pub mu_init: f64,
    pub verbose: bool,
}

impl Default for IpOptions {
    fn default() -> Self {
        Self {
            max_iter: 3000,
            tol: 1e-6,
            constr_tol: 1e-6,
            mu_init: 0.1,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IpStatus {
    Converged,
    MaxIterations,
    /// Restoration ended at a point where `family` is still violated.
    Infeasible { family: String, violation: f64 },
}

#[derive(Clone, Debug)]
pub struct IpResult {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub violation: f64,
    pub kkt_error: f64,
    pub iterations: usize,
    pub status: IpStatus,
}

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const ETA: f64 = 1e-4;
const S_PHI: f64 = 2.3;
const S_THETA: f64 = 1.1;
const DELTA: f64 = 1.0;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const MAX_RETRIES: usize = 3;
const GAMMA_ALPHA: f64 = 0.05;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const BOUND_PUSH: f64 = 1e-2;

/// Restricts an NLP to the variables whose bounds differ.
struct Reduced<'a, N: Nlp + ?Sized> {
    inner: &'a N,
    free: Vec<usize>,
    full: DVector<f64>,
}

impl<'a, N: Nlp + ?Sized> Reduced<'a, N> {
    fn expand(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = self.full.clone();
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    fn shrink(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| x[i]))
    }

    fn shrink_jac(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        j.select_columns(&self.free)
    }
}

impl<N: Nlp + ?Sized> Nlp for Reduced<'_, N> {
    fn num_variables(&self) -> usize {
        self.free.len()
    }
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }
    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let (l, u) = self.inner.bounds();
        (self.shrink(&l), self.shrink(&u))
    }
    fn evaluate(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.inner.evaluate(&self.expand(x))
    }
    fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives> {
        let d = self.inner.derivatives(&self.expand(x))?;
        Ok(Derivatives {
            f: d.f,
            grad: self.shrink(&d.grad),
            c: d.c,
            jac: self.shrink_jac(&d.jac),
        })
    }
    fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.inner.constraints(&self.expand(x))
    }
    fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (c, j) = self.inner.constraint_jacobian(&self.expand(x))?;
        Ok((c, self.shrink_jac(&j)))
    }
    fn constraint_family(&self, row: usize) -> String {
        self.inner.constraint_family(row)
    }
    fn lagrangian_hessian(&self, x: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        let h = self.inner.lagrangian_hessian(&self.expand(x), sigma, lambda)?;
        Some(h.map(|h| h.select_rows(&self.free).select_columns(&self.free)))
    }
}

/// Elastic feasibility problem
/// `min ρ·Σ(p + n) + ζ/2·‖D(x − x_R)‖²  s.t.  c(x) − p + n = 0, p, n ≥ 0`.
struct Restoration<'a> {
    inner: &'a dyn Nlp,
    reference: DVector<f64>,
    weight: DVector<f64>,
    zeta: f64,
    rho: f64,
}

impl Restoration<'_> {
    fn split<'v>(&self, v: &'v DVector<f64>) -> (DVector<f64>, nalgebra::DVectorView<'v, f64>, nalgebra::DVectorView<'v, f64>) {
        let n = self.inner.num_variables();
        let m = self.inner.num_constraints();
        (v.rows(0, n).into_owned(), v.rows(n, m), v.rows(n + m, m))
    }

    fn objective(&self, v: &DVector<f64>) -> f64 {
        let (x, p, n) = self.split(v);
        let d = (x - &self.reference).component_mul(&self.weight);
        self.rho * (p.sum() + n.sum()) + 0.5 * self.zeta * d.norm_squared()
    }
}

impl Nlp for Restoration<'_> {
    fn num_variables(&self) -> usize {
        self.inner.num_variables() + 2 * self.inner.num_constraints()
    }
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }
    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let (l, u) = self.inner.bounds();
        let m = self.inner.num_constraints();
        let n = l.len();
        let mut lo = DVector::zeros(n + 2 * m);
        let mut hi = DVector::from_element(n + 2 * m, f64::INFINITY);
        lo.rows_mut(0, n).copy_from(&l);
        hi.rows_mut(0, n).copy_from(&u);
        (lo, hi)
    }
    fn evaluate(&self, v: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (x, p, n) = self.split(v);
        let c = self.inner.constraints(&x)?;
        Ok((self.objective(v), c - p + n))
    }
    fn derivatives(&self, v: &DVector<f64>) -> Result<Derivatives> {
        let (x, p, n) = self.split(v);
        let nx = x.len();
        let m = p.len();
        let (c, jx) = self.inner.constraint_jacobian(&x)?;
        let mut grad = DVector::from_element(nx + 2 * m, self.rho);
        let dx = (&x - &self.reference).component_mul(&self.weight).component_mul(&self.weight) * self.zeta;
        grad.rows_mut(0, nx).copy_from(&dx);
        let mut jac = DMatrix::zeros(m, nx + 2 * m);
        jac.view_mut((0, 0), (m, nx)).copy_from(&jx);
        for i in 0..m {
            jac[(i, nx + i)] = -1.0;
            jac[(i, nx + m + i)] = 1.0;
        }
        Ok(Derivatives {
            f: self.objective(v),
            grad,
            c: c - p + n,
            jac,
        })
    }
    fn lagrangian_hessian(&self, v: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        let (x, _, _) = self.split(v);
        let nx = x.len();
        let hx = match self.inner.lagrangian_hessian(&x, 0.0, lambda)? {
            Ok(h) => h,
            Err(e) => return Some(Err(e)),
        };
        let mut h = DMatrix::zeros(v.len(), v.len());
        h.view_mut((0, 0), (nx, nx)).copy_from(&hx);
        for i in 0..nx {
            h[(i, i)] += sigma * self.zeta * self.weight[i] * self.weight[i];
        }
        Some(Ok(h))
    }
}

fn push_into_interior(x: &mut DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) {
    for i in 0..x.len() {
        let span = u[i] - l[i];
        if l[i].is_finite() {
            let p = (BOUND_PUSH * l[i].abs().max(1.0)).min(BOUND_PUSH * span);
            x[i] = x[i].max(l[i] + p);
        }
        if u[i].is_finite() {
            let p = (BOUND_PUSH * u[i].abs().max(1.0)).min(BOUND_PUSH * span);
            x[i] = x[i].min(u[i] - p);
        }
    }
}

/// Largest step in `(0, 1]` keeping `v + α·d` a fraction `tau` inside `v > lo`.
fn max_step(slack: &[f64], d: &[f64], tau: f64) -> f64 {
    let mut a: f64 = 1.0;
    for (s, dv) in slack.iter().zip(d) {
        if *dv < 0.0 {
            a = a.min(-tau * s / dv);
        }
    }
    a
}

struct Iterate {
    x: DVector<f64>,
    lambda: DVector<f64>,
    zl: DVector<f64>,
    zu: DVector<f64>,
    d: Derivatives,
}

struct Solver<'a> {
    nlp: &'a dyn Nlp,
    opts: &'a IpOptions,
    l: DVector<f64>,
    u: DVector<f64>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    scale: f64,
    restoration_allowed: bool,
    /// Stop as soon as this returns true (used by the restoration phase).
    early_exit: Option<&'a StopTest<'a>>,
}

type StopTest<'a> = dyn Fn(&DVector<f64>) -> bool + Sync + 'a;

enum Outcome {
    Converged,
    MaxIterations,
    EarlyExit,
    Stalled,
    Infeasible(String, f64),
}

impl Solver<'_> {
    fn slacks(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = x.len();
        let sl = DVector::from_iterator(n, (0..n).map(|i| if self.has_l[i] { x[i] - self.l[i] } else { 1.0 }));
        let su = DVector::from_iterator(n, (0..n).map(|i| if self.has_u[i] { self.u[i] - x[i] } else { 1.0 }));
        (sl, su)
    }

    fn barrier(&self, f: f64, x: &DVector<f64>, mu: f64) -> f64 {
        let (sl, su) = self.slacks(x);
        let mut b = self.scale * f;
        for i in 0..x.len() {
            if self.has_l[i] {
                b -= mu * sl[i].ln();
            }
            if self.has_u[i] {
                b -= mu * su[i].ln();
            }
        }
        b
    }

    /// Scaled optimality error at barrier parameter `mu`.
    fn error(&self, it: &Iterate, mu: f64) -> f64 {
        let n = it.x.len();
        let m = it.lambda.len();
        let (sl, su) = self.slacks(&it.x);
        let dual = &it.d.grad * self.scale + it.d.jac.transpose() * &it.lambda - &it.zl + &it.zu;
        let zsum = it.zl.abs().sum() + it.zu.abs().sum();
        let sd = (S_MAX.max((it.lambda.abs().sum() + zsum) / (n + m).max(1) as f64)) / S_MAX;
        let sc = (S_MAX.max(zsum / n.max(1) as f64)) / S_MAX;
        let mut compl: f64 = 0.0;
        for i in 0..n {
            if self.has_l[i] {
                compl = compl.max((sl[i] * it.zl[i] - mu).abs());
            }
            if self.has_u[i] {
                compl = compl.max((su[i] * it.zu[i] - mu).abs());
            }
        }
        (dual.amax() / sd).max(it.d.c.amax()).max(compl / sc)
    }

    /// Bound multipliers pulled into `[μ/(κ s), κ μ/s]`.
    fn clamp_duals(&self, x: &DVector<f64>, zl: &DVector<f64>, zu: &DVector<f64>, mu: f64) -> (DVector<f64>, DVector<f64>) {
        let (sl, su) = self.slacks(x);
        let mut zl = zl.clone();
        let mut zu = zu.clone();
        for i in 0..x.len() {
            if self.has_l[i] {
                zl[i] = zl[i].min(KAPPA_SIGMA * mu / sl[i]).max(mu / (KAPPA_SIGMA * sl[i]));
            }
            if self.has_u[i] {
                zu[i] = zu[i].min(KAPPA_SIGMA * mu / su[i]).max(mu / (KAPPA_SIGMA * su[i]));
            }
        }
        (zl, zu)
    }

    /// Least-squares constraint multipliers for the current bound duals.
    fn multiplier_estimate(&self, d: &Derivatives, zl: &DVector<f64>, zu: &DVector<f64>) -> Option<DVector<f64>> {
        let r = -(&d.grad * self.scale - zl + zu);
        let jt = d.jac.transpose();
        let lambda = jt.clone().svd(true, true).solve(&r, 1e-10).ok()?;
        (lambda.amax() <= 1e3 && lambda.iter().all(|v| v.is_finite())).then_some(lambda)
    }

    fn kkt_matrix(&self, w: &DMatrix<f64>, sigma: &DVector<f64>, jac: &DMatrix<f64>, dw: f64, dc: f64) -> DMatrix<f64> {
        let n = w.nrows();
        let m = jac.nrows();
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(w);
        for i in 0..n {
            k[(i, i)] += sigma[i] + dw;
        }
        k.view_mut((n, 0), (m, n)).copy_from(jac);
        k.view_mut((0, n), (n, m)).copy_from(&jac.transpose());
        for i in 0..m {
            k[(n + i, n + i)] = -dc;
        }
        k
    }

    /// Smallest primal shift making `W + Σ` positive definite on the null
    /// space of `jac`.
    fn convexify(&self, w: &DMatrix<f64>, sigma: &DVector<f64>, jac: &DMatrix<f64>) -> f64 {
        let n = w.nrows();
        let jtj = jac.transpose() * jac;
        let eig = jtj.symmetric_eigen();
        let top = eig.eigenvalues.amax().max(1.0);
        let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-12 * top).collect();
        if cols.is_empty() {
            return 0.0;
        }
        let z = eig.eigenvectors.select_columns(&cols);
        let mut h = w.clone();
        for i in 0..n {
            h[(i, i)] += sigma[i];
        }
        let reduced = z.transpose() * h * &z;
        let lmin = reduced.symmetric_eigenvalues().min();
        if lmin > 1e-10 {
            0.0
        } else {
            2.0 * -lmin + 1e-8
        }
    }

    /// Factorizes the primal-dual matrix with primal regularization of at
    /// least `dw`, adding dual regularization when it is singular.
    fn factor(&self, w: &DMatrix<f64>, sigma: &DVector<f64>, jac: &DMatrix<f64>, mu: f64, mut dw: f64) -> (nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, f64) {
        let mut dc = 0.0;
        loop {
            let lu = self.kkt_matrix(w, sigma, jac, dw, dc).lu();
            let d = lu.u().diagonal().abs();
            if d.min() > 1e-14 * d.max().max(1.0) || dw > 1e10 {
                return (lu, dw);
            }
            if dc == 0.0 {
                dc = 1e-8 * mu.powf(0.25);
            } else {
                dw = if dw == 0.0 { 1e-4 } else { dw * 8.0 };
            }
        }
    }

    fn run(&self, mut it: Iterate, mut mu: f64, iter_offset: usize) -> Result<(Iterate, Outcome, usize, f64)> {
        let n = it.x.len();
        let m = it.lambda.len();
        let mut w = DMatrix::<f64>::identity(n, n);
        let mut bfgs_started = false;
        let exact = self.nlp.lagrangian_hessian(&it.x, self.scale, &it.lambda).is_some();
        let mut last_dw = 0.0_f64;
        let mut retries = 0usize;
        let mut last_step = (0.0, 0.0);
        let mut filter: Vec<(f64, f64)> = Vec::new();
        let theta0 = it.d.c.abs().sum();
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut iter = 0usize;
        let mut stall = 0usize;
        let mut best_violation = f64::INFINITY;
        loop {
            if let Some(stop) = self.early_exit {
                if stop(&it.x) {
                    return Ok((it, Outcome::EarlyExit, iter, mu));
                }
            }
            let e0 = self.error(&it, 0.0);
            let viol = it.d.c.amax();
            if e0 <= self.opts.tol && viol <= self.opts.constr_tol {
                return Ok((it, Outcome::Converged, iter, mu));
            }
            if iter + iter_offset >= self.opts.max_iter {
                return Ok((it, Outcome::MaxIterations, iter, mu));
            }
            let mut updates = 0;
            while self.error(&it, mu) <= KAPPA_EPS * mu && mu > self.opts.tol / 10.0 && updates < 5 {
                mu = (self.opts.tol / 10.0).max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                updates += 1;
            }
            if updates > 0 {
                filter.clear();
            }
            if self.opts.verbose {
                eprintln!(
                    "{:5} f={:.10e} viol={:.3e} err={:.3e} mu={:.1e} reg={:.1e} step={:.2e}",
                    iter + iter_offset,
                    it.d.f,
                    viol,
                    e0,
                    mu,
                    last_step.1,
                    last_step.0
                );
            }

            let (sl, su) = self.slacks(&it.x);
            let mut sigma = DVector::zeros(n);
            let mut grad_phi = &it.d.grad * self.scale;
            for i in 0..n {
                if self.has_l[i] {
                    sigma[i] += it.zl[i] / sl[i];
                    grad_phi[i] -= mu / sl[i];
                }
                if self.has_u[i] {
                    sigma[i] += it.zu[i] / su[i];
                    grad_phi[i] += mu / su[i];
                }
            }
            if exact {
                w = self.nlp.lagrangian_hessian(&it.x, self.scale, &it.lambda).expect("exact Hessian")?;
            }
            let mut dw = if exact { self.convexify(&w, &sigma, &it.d.jac) } else { 0.0 };
            if retries > 0 {
                dw = dw.max(last_dw);
            }
            let (lu, used) = self.factor(&w, &sigma, &it.d.jac, mu, dw);
            dw = used;
            let Some((dx, lambda_plus)) = ({
                let mut rhs = DVector::zeros(n + m);
                rhs.rows_mut(0, n).copy_from(&(-&grad_phi));
                rhs.rows_mut(n, m).copy_from(&(-&it.d.c));
                lu.solve(&rhs)
                    .filter(|v| v.iter().all(|a| a.is_finite()))
                    .map(|sol| (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
            }) else {
                return Ok((it, Outcome::Stalled, iter, mu));
            };
            last_dw = dw;
            let solve = |cvec: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
                let mut rhs = DVector::zeros(n + m);
                rhs.rows_mut(0, n).copy_from(&(-&grad_phi));
                rhs.rows_mut(n, m).copy_from(&(-cvec));
                let sol = lu.solve(&rhs)?;
                if sol.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                Some((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
            };
            let mut dzl = DVector::zeros(n);
            let mut dzu = DVector::zeros(n);
            for i in 0..n {
                if self.has_l[i] {
                    dzl[i] = mu / sl[i] - it.zl[i] - it.zl[i] / sl[i] * dx[i];
                }
                if self.has_u[i] {
                    dzu[i] = mu / su[i] - it.zu[i] + it.zu[i] / su[i] * dx[i];
                }
            }
            let tau = (1.0 - mu).max(0.99);
            let alpha_max = max_step(sl.as_slice(), dx.as_slice(), tau).min(max_step(
                su.as_slice(),
                (-&dx).as_slice(),
                tau,
            ));
            let alpha_z = max_step(it.zl.as_slice(), dzl.as_slice(), tau).min(max_step(it.zu.as_slice(), dzu.as_slice(), tau));

            let theta = it.d.c.abs().sum();
            let phi = self.barrier(it.d.f, &it.x, mu);
            let gd = grad_phi.dot(&dx);
            let trial_values = |x: &DVector<f64>| -> Option<(f64, f64)> {
                if !(0..n).all(|i| (!self.has_l[i] || x[i] > self.l[i]) && (!self.has_u[i] || x[i] < self.u[i])) {
                    return None;
                }
                let (f, c) = self.nlp.evaluate(x).ok()?;
                let ph = self.barrier(f, x, mu);
                (ph.is_finite() && c.iter().all(|v| v.is_finite())).then(|| (c.abs().sum(), ph))
            };
            let switching = |alpha: f64| gd < 0.0 && alpha * (-gd).powf(S_PHI) > DELTA * theta.powf(S_THETA);
            // Returns whether (θ, φ) is acceptable and whether it is an objective step.
            let acceptable = |th: f64, ph: f64, alpha: f64| -> (bool, bool) {
                if th > theta_max || filter.iter().any(|&(ft, fp)| th >= ft && ph >= fp) {
                    return (false, false);
                }
                if theta <= theta_min && switching(alpha) {
                    (ph <= phi + ETA * alpha * gd, true)
                } else {
                    (th <= (1.0 - GAMMA_THETA) * theta || ph <= phi - GAMMA_PHI * theta, false)
                }
            };
            let alpha_min = {
                let a = if gd < 0.0 {
                    let base = GAMMA_THETA.min(GAMMA_PHI * theta / -gd);
                    if theta <= theta_min {
                        base.min(DELTA * theta.powf(S_THETA) / (-gd).powf(S_PHI))
                    } else {
                        base
                    }
                } else {
                    GAMMA_THETA
                };
                (GAMMA_ALPHA * a).max(1e-14)
            };

            let mut alpha = alpha_max;
            let mut accepted: Option<(DVector<f64>, f64, bool)> = None;
            let mut first = true;
            'search: while alpha >= alpha_min {
                let trial = &it.x + &dx * alpha;
                if let Some((th, ph)) = trial_values(&trial) {
                    let (ok, ftype) = acceptable(th, ph, alpha);
                    if ok {
                        accepted = Some((trial, alpha, ftype));
                        break;
                    }
                    if first && th >= theta {
                        // Second-order corrections.
                        let mut csoc = &it.d.c * alpha;
                        let mut th_prev = th;
                        let mut x_prev = trial;
                        for _ in 0..4 {
                            let Ok(cp) = self.nlp.constraints(&x_prev) else {
                                break;
                            };
                            csoc += cp;
                            let Some((dsoc, _)) = solve(&csoc) else {
                                break;
                            };
                            let a_soc = max_step(sl.as_slice(), dsoc.as_slice(), tau)
                                .min(max_step(su.as_slice(), (-&dsoc).as_slice(), tau));
                            let xs = &it.x + &dsoc * a_soc;
                            let Some((ths, phs)) = trial_values(&xs) else {
                                break;
                            };
                            let (ok, ftype) = acceptable(ths, phs, alpha);
                            if ok {
                                accepted = Some((xs, alpha, ftype));
                                break 'search;
                            }
                            if ths > 0.99 * th_prev {
                                break;
                            }
                            csoc *= a_soc;
                            th_prev = ths;
                            x_prev = xs;
                        }
                    }
                }
                first = false;
                alpha *= 0.5;
            }
            let Some((x_new, alpha, ftype)) = accepted else {
                if retries >= MAX_RETRIES || (!exact && retries > 0) {
                    return Ok((it, Outcome::Stalled, iter, mu));
                }
                // Retry with a stiffer or fresh curvature model.
                retries += 1;
                if exact {
                    last_dw = (last_dw * 10.0).max(1e-4);
                } else {
                    w = DMatrix::identity(n, n);
                    bfgs_started = false;
                }
                continue;
            };
            retries = 0;
            last_step = (alpha, dw);
            if !ftype {
                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
            }
            let d_new = self.nlp.derivatives(&x_new)?;
            let lambda_new = &it.lambda + (&lambda_plus - &it.lambda) * alpha;
            let mut zl = &it.zl + &dzl * alpha_z;
            let mut zu = &it.zu + &dzu * alpha_z;
            let (sl_new, su_new) = self.slacks(&x_new);
            for i in 0..n {
                if self.has_l[i] {
                    let s = sl_new[i];
                    zl[i] = zl[i].min(KAPPA_SIGMA * mu / s).max(mu / (KAPPA_SIGMA * s));
                }
                if self.has_u[i] {
                    let s = su_new[i];
                    zu[i] = zu[i].min(KAPPA_SIGMA * mu / s).max(mu / (KAPPA_SIGMA * s));
                }
            }

            // Damped BFGS on the Lagrangian of the scaled problem.
            let s = &x_new - &it.x;

            let y = if exact { DVector::zeros(n) } else { (&d_new.grad - &it.d.grad) * self.scale + (d_new.jac.transpose() - it.d.jac.transpose()) * &lambda_new };
            let sy = s.dot(&y);
            if !exact && s.norm() > 0.0 {
                if !bfgs_started && sy > 0.0 {
                    w = DMatrix::identity(n, n) * (y.norm_squared() / sy);
                    bfgs_started = true;
                }
                let ws = &w * &s;
                let sws = s.dot(&ws);
                if sws > 0.0 {
                    let theta = if sy >= 0.2 * sws { 1.0 } else { 0.8 * sws / (sws - sy) };
                    let r = &y * theta + &ws * (1.0 - theta);
                    let sr = s.dot(&r);
                    if sr > 0.0 {
                        w -= &ws * ws.transpose() / sws;
                        w += &r * r.transpose() / sr;
                        w = (&w + w.transpose()) * 0.5;
                    }
                }
            }

            it = Iterate {
                x: x_new,
                lambda: lambda_new,
                zl,
                zu,
                d: d_new,
            };
            iter += 1;

            // Infeasibility stagnation: hand over to restoration.
            let v = it.d.c.amax();
            if v < 0.99 * best_violation {
                best_violation = v;
                stall = 0;
            } else if v > self.opts.constr_tol {
                stall += 1;
                if stall > 50 && self.restoration_allowed {
                    return Ok((it, Outcome::Stalled, iter, mu));
                }
            }
        }
    }
}

fn initial_duals(x: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>, mu: f64) -> (DVector<f64>, DVector<f64>) {
    let n = x.len();
    let zl = DVector::from_iterator(n, (0..n).map(|i| if l[i].is_finite() { mu.clamp(1e-2, 1.0) } else { 0.0 }));
    let zu = DVector::from_iterator(n, (0..n).map(|i| if u[i].is_finite() { mu.clamp(1e-2, 1.0) } else { 0.0 }));
    (zl, zu)
}

fn family_of_max(nlp: &dyn Nlp, c: &DVector<f64>) -> (String, f64) {
    let (row, v) = c.iter().enumerate().fold((0, 0.0_f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    (nlp.constraint_family(row), v)
}

const RESTORATION_PROGRESS: f64 = 1e-3;
const RESTORATION_PATIENCE: usize = 100;

/// Elastic restoration from `x`. Returns the restored point and whether
/// it is feasible for the original problem.
fn restore(nlp: &dyn Nlp, x: &DVector<f64>, mu: f64, opts: &IpOptions, used: usize) -> Result<(DVector<f64>, bool, usize)> {
    let c = nlp.constraints(x)?;
    let theta0 = c.amax();
    let rho = 1000.0;
    let zeta = mu.sqrt();
    let n = x.len();
    let m = c.len();
    let weight = x.map(|v| 1.0 / v.abs().max(1.0));
    let rest = Restoration {
        inner: nlp,
        reference: x.clone(),
        weight,
        zeta,
        rho,
    };
    let mut v0 = DVector::zeros(n + 2 * m);
    v0.rows_mut(0, n).copy_from(x);
    for i in 0..m {
        let a = (mu - rho * c[i]) / (2.0 * rho);
        let nn = a + (a * a + mu * c[i] / (2.0 * rho)).sqrt();
        v0[n + m + i] = nn.max(1e-12);
        v0[n + i] = (c[i] + nn).max(1e-12);
    }
    let target = (0.1 * theta0).max(0.1 * opts.constr_tol);
    // (best ℓ1 violation, iterations since it improved)
    let progress = std::sync::Mutex::new((f64::INFINITY, 0usize));
    let feasible_enough = |v: &DVector<f64>| -> bool {
        let xv = v.rows(0, n).into_owned();
        if let Ok(c) = nlp.constraints(&xv) {
            let mut p = progress.lock().unwrap();
            let l1 = c.iter().map(|v| v.abs()).sum::<f64>();
            if l1 < (1.0 - RESTORATION_PROGRESS) * p.0 {
                *p = (l1, 0);
            } else {
                p.1 += 1;
                if p.1 > RESTORATION_PATIENCE {
                    return true;
                }
            }
        }
        match nlp.evaluate(&xv) {
            Ok((_, c)) => c.amax() <= target,
            Err(_) => false,
        }
    };
    let ropts = IpOptions {
        tol: opts.tol.min(1e-8),
        mu_init: mu.max(opts.tol),
        ..opts.clone()
    };
    let (l, u) = rest.bounds();
    let (res, iters) = run_ip(&rest, v0, &l, &u, &ropts, false, Some(&feasible_enough), used)?;
    let xr = res.x.rows(0, n).into_owned();
    let viol = nlp.constraints(&xr)?.amax();
    Ok((xr, viol <= opts.constr_tol.max(target), iters - used))
}

/// Result for a point where restoration failed; the objective there may be undefined.
fn infeasible(nlp: &dyn Nlp, x: DVector<f64>, lambda: DVector<f64>) -> Result<RunResult> {
    let d = match nlp.derivatives(&x) {
        Ok(d) => d,
        Err(_) => {
            let (c, jac) = nlp.constraint_jacobian(&x)?;
            Derivatives {
                f: f64::NAN,
                grad: DVector::zeros(x.len()),
                c,
                jac,
            }
        }
    };
    let (family, v) = family_of_max(nlp, &d.c);
    Ok(RunResult {
        x,
        lambda,
        d,
        kkt: f64::INFINITY,
        outcome: Outcome::Infeasible(family, v),
    })
}

struct RunResult {
    x: DVector<f64>,
    lambda: DVector<f64>,
    d: Derivatives,
    kkt: f64,
    outcome: Outcome,
}

#[allow(clippy::too_many_arguments)]
fn run_ip(
    nlp: &dyn Nlp,
    mut x: DVector<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    opts: &IpOptions,
    restoration_allowed: bool,
    early_exit: Option<&StopTest<'_>>,
    used: usize,
) -> Result<(RunResult, usize)> {
    push_into_interior(&mut x, l, u);
    let mut total = used;
    let d = match nlp.derivatives(&x) {
        Ok(d) => d,
        Err(_) if restoration_allowed => {
            let (xr, ok, riters) = restore(nlp, &x, opts.mu_init, opts, total)?;
            total += riters;
            if !ok {
                let m = nlp.num_constraints();
                return Ok((infeasible(nlp, xr, DVector::zeros(m))?, total));
            }
            x = xr;
            push_into_interior(&mut x, l, u);
            nlp.derivatives(&x)?
        }
        Err(e) => return Err(e),
    };
    let gmax = d.grad.amax();
    let scale = if gmax > 0.0 && gmax.is_finite() { 100.0 / gmax } else { 1.0 };
    let solver = Solver {
        nlp,
        opts,
        l: l.clone(),
        u: u.clone(),
        has_l: l.iter().map(|v| v.is_finite()).collect(),
        has_u: u.iter().map(|v| v.is_finite()).collect(),
        scale,
        restoration_allowed,
        early_exit,
    };
    let mut mu = opts.mu_init;
    let (zl, zu) = initial_duals(&x, l, u, mu);
    let m = d.c.len();
    let mut it = Iterate {
        x,
        lambda: DVector::zeros(m),
        zl,
        zu,
        d,
    };
    let mut restorations = 0;
    loop {
        let (out, outcome, iters, mu_out) = solver.run(it, mu, total)?;
        mu = mu_out;
        total += iters;
        it = out;
        match outcome {
            Outcome::Stalled if restoration_allowed && restorations < 10 && total < opts.max_iter => {
                restorations += 1;
                mu = mu.max(opts.tol);
                let (xr, ok, riters) = restore(nlp, &it.x, mu, opts, total)?;
                total += riters;
                if !ok {
                    return Ok((infeasible(nlp, xr, it.lambda)?, total));
                }
                let mut x = xr;
                push_into_interior(&mut x, l, u);
                let d = nlp.derivatives(&x)?;
                let (zl, zu) = solver.clamp_duals(&x, &it.zl, &it.zu, mu);
                let lambda = solver.multiplier_estimate(&d, &zl, &zu).unwrap_or_else(|| DVector::zeros(m));
                it = Iterate { x, lambda, zl, zu, d };
            }
            outcome => {
                let kkt = solver.error(&it, 0.0);
                let outcome = match outcome {
                    Outcome::Stalled if it.d.c.amax() > opts.constr_tol && restoration_allowed => {
                        let (family, v) = family_of_max(nlp, &it.d.c);
                        Outcome::Infeasible(family, v)
                    }
                    Outcome::Stalled => Outcome::MaxIterations,
                    o => o,
                };
                return Ok((
                    RunResult {
                        x: it.x,
                        lambda: it.lambda,
                        d: it.d,
                        kkt,
                        outcome,
                    },
                    total,
                ));
            }
        }
    }
}

/// Solves `nlp` from `x0`. Variables with equal bounds are held fixed.
pub fn solve<N: Nlp + ?Sized>(nlp: &N, x0: &DVector<f64>, opts: &IpOptions) -> Result<IpResult> {
    let (l, u) = nlp.bounds();
    let n = x0.len();
    let free: Vec<usize> = (0..n).filter(|&i| l[i] < u[i]).collect();
    let mut full = x0.clone();
    for i in 0..n {
        if l[i] >= u[i] {
            full[i] = l[i];
        } else {
            full[i] = full[i].clamp(l[i], u[i]);
        }
    }
    let reduced = Reduced {
        inner: nlp,
        free,
        full,
    };
    let (rl, ru) = reduced.bounds();
    let xr = reduced.shrink(&reduced.full);
    let (res, iterations) = run_ip(&reduced, xr, &rl, &ru, opts, true, None, 0)?;
    let status = match res.outcome {
        Outcome::Converged => IpStatus::Converged,
        Outcome::Infeasible(family, violation) => IpStatus::Infeasible { family, violation },
        Outcome::MaxIterations | Outcome::Stalled | Outcome::EarlyExit => IpStatus::MaxIterations,
    };
    Ok(IpResult {
        x: reduced.expand(&res.x),
        multipliers: res.lambda,
        objective: res.d.f,
        violation: res.d.c.amax(),
        kkt_error: res.kkt,
        iterations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad<F, C> {
        n: usize,
        m: usize,
        l: Vec<f64>,
        u: Vec<f64>,
        f: F,
        c: C,
    }

    impl<F, C> Nlp for Quad<F, C>
    where
        F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync,
        C: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>) + Sync,
    {
        fn num_variables(&self) -> usize {
            self.n
        }
        fn num_constraints(&self) -> usize {
            self.m
        }
        fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
            (DVector::from_vec(self.l.clone()), DVector::from_vec(self.u.clone()))
        }
        fn evaluate(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
            Ok(((self.f)(x).0, (self.c)(x).0))
        }
        fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives> {
            let (f, grad) = (self.f)(x);
            let (c, jac) = (self.c)(x);
            Ok(Derivatives { f, grad, c, jac })
        }
    }

    fn tight() -> IpOptions {
        IpOptions {
            tol: 1e-10,
            constr_tol: 1e-10,
            ..IpOptions::default()
        }
    }

    #[test]
    fn active_lower_bound() {
        let p = Quad {
            n: 1,
            m: 0,
            l: vec![2.0],
            u: vec![f64::INFINITY],
            f: |x: &DVector<f64>| ((x[0] - 1.0).powi(2), DVector::from_element(1, 2.0 * (x[0] - 1.0))),
            c: |_: &DVector<f64>| (DVector::zeros(0), DMatrix::zeros(0, 1)),
        };
        let r = solve(&p, &DVector::from_element(1, 5.0), &tight()).unwrap();
        assert_eq!(r.status, IpStatus::Converged);
        assert!((r.x[0] - 2.0).abs() < 1e-8, "{}", r.x[0]);
    }

    #[test]
    fn equality_constrained_quadratic() {
        let p = Quad {
            n: 2,
            m: 1,
            l: vec![f64::NEG_INFINITY; 2],
            u: vec![f64::INFINITY; 2],
            f: |x: &DVector<f64>| (x.norm_squared(), x * 2.0),
            c: |x: &DVector<f64>| (DVector::from_element(1, x[0] + x[1] - 1.0), DMatrix::from_element(1, 2, 1.0)),
        };
        let r = solve(&p, &DVector::from_vec(vec![3.0, -1.0]), &tight()).unwrap();
        assert_eq!(r.status, IpStatus::Converged);
        assert!((r.x[0] - 0.5).abs() < 1e-8 && (r.x[1] - 0.5).abs() < 1e-8);
        assert!((r.multipliers[0] / (100.0 / 6.0) + 1.0).abs() < 1e-6, "{}", r.multipliers[0]);
    }

    #[test]
    fn nonlinear_constraint_and_bounds() {
        // min x + y on the unit circle with x ≥ −0.5.
        let p = Quad {
            n: 2,
            m: 1,
            l: vec![-0.5, f64::NEG_INFINITY],
            u: vec![f64::INFINITY; 2],
            f: |x: &DVector<f64>| (x[0] + x[1], DVector::from_element(2, 1.0)),
            c: |x: &DVector<f64>| {
                (
                    DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.0),
                    DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
                )
            },
        };
        let r = solve(&p, &DVector::from_vec(vec![1.0, 1.0]), &tight()).unwrap();
        assert_eq!(r.status, IpStatus::Converged);
        assert!((r.x[0] + 0.5).abs() < 1e-8, "{}", r.x);
        assert!((r.x[1] + 0.75_f64.sqrt()).abs() < 1e-8, "{}", r.x);
    }

    #[test]
    fn fixed_variables_are_held() {
        let p = Quad {
            n: 2,
            m: 0,
            l: vec![f64::NEG_INFINITY, 3.0],
            u: vec![f64::INFINITY, 3.0],
            f: |x: &DVector<f64>| ((x[0] - x[1]).powi(2), DVector::from_vec(vec![2.0 * (x[0] - x[1]), -2.0 * (x[0] - x[1])])),
            c: |_: &DVector<f64>| (DVector::zeros(0), DMatrix::zeros(0, 2)),
        };
        let r = solve(&p, &DVector::from_vec(vec![0.0, 0.0]), &tight()).unwrap();
        assert_eq!(r.status, IpStatus::Converged);
        assert_eq!(r.x[1], 3.0);
        assert!((r.x[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_problem_is_detected() {
        // x² + 1 = 0 has no real solution.
        let p = Quad {
            n: 1,
            m: 1,
            l: vec![-10.0],
            u: vec![10.0],
            f: |x: &DVector<f64>| (x[0] * x[0], DVector::from_element(1, 2.0 * x[0])),
            c: |x: &DVector<f64>| (DVector::from_element(1, x[0] * x[0] + 1.0), DMatrix::from_element(1, 1, 2.0 * x[0])),
        };
        let r = solve(&p, &DVector::from_element(1, 3.0), &IpOptions::default()).unwrap();
        assert!(matches!(r.status, IpStatus::Infeasible { .. }), "{:?}", r.status);
    }

    #[test]
    fn rosenbrock_with_circle() {
        // Classic: min (1−x)² + 100(y−x²)² s.t. x² + y² = 1.5
        let p = Quad {
            n: 2,
            m: 1,
            l: vec![f64::NEG_INFINITY; 2],
            u: vec![f64::INFINITY; 2],
            f: |x: &DVector<f64>| {
                let (a, b) = (x[0], x[1]);
                (
                    (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                    DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]),
                )
            },
            c: |x: &DVector<f64>| {
                (
                    DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.5),
                    DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
                )
            },
        };
        let r = solve(&p, &DVector::from_vec(vec![-1.0, 1.0]), &tight()).unwrap();
        assert_eq!(r.status, IpStatus::Converged);
        assert!(r.violation < 1e-10);
        // Stationarity along the circle: ∇f ∥ ∇c.
        let (a, b) = (r.x[0], r.x[1]);
        let g = [-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        assert!((g[0] * b - g[1] * a).abs() < 1e-6, "{}", r.x);
    }
}
