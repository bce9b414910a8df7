//! Dense convex QP solver: `min 1/2 z'Pz + q'z  s.t.  l <= Az <= u` by operator splitting.
//!
//! ADMM with a slack `nu in [l, u]` for `Az` and over-relaxation, run on a Ruiz-equilibrated
//! copy of the problem. `P + sigma I + A' diag(rho) A` is factored once and again only when
//! the step size is rebalanced from the residual ratio. Infeasibility certificates are read
//! off successive iterate differences. Polishing solves the KKT system on the active set.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: Mat,
    pub q: Vector,
    pub a: Mat,
    pub l: Vector,
    pub u: Vector,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z)
    }

    fn check(&self) -> Result<()> {
        let n = self.q.len();
        let c = self.l.len();
        if self.p.shape() != (n, n) {
            return Err(Error::QpInput(format!("P is {:?}, expected {n}x{n}", self.p.shape())));
        }
        if self.a.shape() != (c, n) || self.u.len() != c {
            return Err(Error::QpInput("constraint dimensions disagree".into()));
        }
        let scale = 1.0 + linalg::max_abs(&self.p);
        if linalg::asymmetry(&self.p) > 1e-9 * scale {
            return Err(Error::QpInput("P is not symmetric".into()));
        }
        for i in 0..c {
            if self.l[i].is_nan() || self.u[i].is_nan() || self.l[i] > self.u[i] {
                return Err(Error::QpInput(format!("bound {i} has l > u")));
            }
        }
        if self
            .q
            .iter()
            .chain(self.p.iter())
            .chain(self.a.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::QpInput("non-finite problem data".into()));
        }
        // min eigenvalue > -1e-7  <=>  P + 1e-7 I is positive definite
        let shifted = &self.p + Mat::identity(n, n) * 1e-7;
        if n > 0 && Cholesky::new(shifted).is_none() {
            return Err(Error::QpInput("P is not positive semidefinite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha_relax: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    /// Consecutive iterations an infeasibility certificate must hold.
    pub infeasibility_streak: usize,
    pub polish: bool,
    /// Residual multiple of the termination tolerance at which polishing is attempted.
    pub polish_gate: f64,
    pub polish_every: usize,
    pub check_every: usize,
    /// Ruiz equilibration passes; 0 disables scaling.
    pub scaling_iters: usize,
    /// Rebalances `rho` from the primal/dual residual ratio.
    pub adaptive_rho: bool,
    pub adapt_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            rho: 0.1,
            sigma: 1e-6,
            alpha_relax: 1.6,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-6,
            eps_dual_inf: 1e-6,
            max_iter: 20_000,
            infeasibility_streak: 25,
            polish: true,
            polish_gate: 1e3,
            polish_every: 50,
            check_every: 5,
            scaling_iters: 10,
            adaptive_rho: true,
            adapt_every: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vector,
    pub dual: Vector,
    pub status: QpStatus,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest violation of `l <= Az <= u`.
    pub primal: f64,
    /// `||Pz + q + A'y||_inf`.
    pub dual: f64,
    /// Largest `|y_i| * distance to the bound y_i points at`.
    pub complementarity: f64,
}

pub fn kkt_residuals(p: &QpProblem, z: &Vector, dual: &Vector) -> KktResiduals {
    let az = &p.a * z;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..az.len() {
        primal = primal.max(p.l[i] - az[i]).max(az[i] - p.u[i]);
        let y = dual[i];
        if y > 0.0 {
            comp = comp.max(y * (p.u[i] - az[i]).abs());
        } else if y < 0.0 {
            comp = comp.max(-y * (az[i] - p.l[i]).abs());
        }
    }
    let r = &p.p * z + &p.q + p.a.transpose() * dual;
    KktResiduals {
        primal,
        dual: r.amax(),
        complementarity: comp,
    }
}

/// Row-compressed copy of a constraint matrix for the per-iteration products.
struct SparseRows {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
    ncols: usize,
}

impl SparseRows {
    fn new(a: &Mat) -> Self {
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    idx.push(j);
                    val.push(v);
                }
            }
            ptr.push(idx.len());
        }
        SparseRows {
            ptr,
            idx,
            val,
            ncols: a.ncols(),
        }
    }

    fn mul(&self, x: &Vector, out: &mut Vector) {
        for i in 0..self.ptr.len() - 1 {
            let mut s = 0.0;
            for k in self.ptr[i]..self.ptr[i + 1] {
                s += self.val[k] * x[self.idx[k]];
            }
            out[i] = s;
        }
    }

    fn mul_t(&self, y: &Vector, out: &mut Vector) {
        out.fill(0.0);
        debug_assert_eq!(out.len(), self.ncols);
        for i in 0..self.ptr.len() - 1 {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for k in self.ptr[i]..self.ptr[i + 1] {
                out[self.idx[k]] += self.val[k] * yi;
            }
        }
    }
}

fn project(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;

fn inv_sqrt_norm(norm: f64) -> f64 {
    if norm < SCALE_MIN {
        1.0
    } else {
        1.0 / norm.clamp(SCALE_MIN, SCALE_MAX).sqrt()
    }
}

/// Ruiz-equilibrated copy of a problem: `P_s = c D P D`, `q_s = c D q`, `A_s = E A D`.
struct Scaled {
    p: Mat,
    q: Vector,
    a: Mat,
    l: Vector,
    u: Vector,
    d: Vector,
    e: Vector,
    cost: f64,
}

fn equilibrate(prob: &QpProblem, iters: usize) -> Scaled {
    let (n, c) = (prob.num_vars(), prob.num_constraints());
    let mut p = prob.p.clone();
    let mut a = prob.a.clone();
    let mut d = Vector::from_element(n, 1.0);
    let mut e = Vector::from_element(c, 1.0);
    for _ in 0..iters {
        let mut dx = Vector::zeros(n);
        for j in 0..n {
            let mut norm = p.column(j).amax();
            if c > 0 {
                norm = norm.max(a.column(j).amax());
            }
            dx[j] = inv_sqrt_norm(norm);
        }
        let de = Vector::from_iterator(c, (0..c).map(|i| inv_sqrt_norm(a.row(i).amax())));
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dx[i] * dx[j];
            }
            for i in 0..c {
                a[(i, j)] *= de[i] * dx[j];
            }
        }
        d.component_mul_assign(&dx);
        e.component_mul_assign(&de);
    }
    let mut q = prob.q.component_mul(&d);
    let mean_col = if n > 0 {
        (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
    } else {
        0.0
    };
    let cost = 1.0 / mean_col.max(q.amax()).clamp(SCALE_MIN, SCALE_MAX);
    p *= cost;
    q *= cost;
    let l = prob.l.component_mul(&e);
    let u = prob.u.component_mul(&e);
    Scaled {
        p,
        q,
        a,
        l,
        u,
        d,
        e,
        cost,
    }
}

struct Iterate {
    x: Vector,
    z: Vector,
    y: Vector,
}

/// Residuals of a scaled iterate, reported in the original units.
struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    /// Primal and dual residuals relative to their scales, in scaled units.
    rel_prim: f64,
    rel_dual: f64,
}

struct Admm<'a> {
    prob: &'a QpProblem,
    sc: Scaled,
    a_s: SparseRows,
    a_orig: SparseRows,
    rho: Vector,
    settings: QpSettings,
}

impl Admm<'_> {
    fn factor(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let n = self.prob.num_vars();
        let mut k = &self.sc.p + Mat::identity(n, n) * self.settings.sigma;
        let ra = Mat::from_fn(self.sc.a.nrows(), n, |i, j| self.rho[i] * self.sc.a[(i, j)]);
        k += self.sc.a.transpose() * ra;
        Cholesky::new(k).ok_or_else(|| Error::Numerical("KKT factorization failed".into()))
    }

    fn set_rho(&mut self, rho: f64) {
        for i in 0..self.rho.len() {
            let (lo, hi) = (self.prob.l[i], self.prob.u[i]);
            self.rho[i] = if lo.is_infinite() && hi.is_infinite() {
                RHO_MIN
            } else if lo == hi {
                RHO_EQ_FACTOR * rho
            } else {
                rho
            };
        }
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let sc = &self.sc;
        let (n, c) = (it.x.len(), it.z.len());
        let mut ax = Vector::zeros(c);
        self.a_s.mul(&it.x, &mut ax);
        let px = &sc.p * &it.x;
        let mut aty = Vector::zeros(n);
        self.a_s.mul_t(&it.y, &mut aty);
        let unscale_c = |v: &Vector| v.component_div(&sc.e).amax();
        let unscale_n = |v: &Vector| v.component_div(&sc.d).amax() / sc.cost;
        let (prim, norm_p, prim_s, norm_ps) = if c > 0 {
            let r = &ax - &it.z;
            (
                unscale_c(&r),
                unscale_c(&ax).max(unscale_c(&it.z)),
                r.amax(),
                ax.amax().max(it.z.amax()),
            )
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        let rd = &px + &sc.q + &aty;
        let dual = unscale_n(&rd);
        let norm_d = unscale_n(&px).max(unscale_n(&aty)).max(unscale_n(&sc.q));
        let norm_ds = px.amax().max(aty.amax()).max(sc.q.amax());
        let s = &self.settings;
        Residuals {
            prim,
            dual,
            eps_prim: s.eps_abs + s.eps_rel * norm_p,
            eps_dual: s.eps_abs + s.eps_rel * norm_d,
            rel_prim: prim_s / norm_ps.max(1e-30),
            rel_dual: rd.amax() / norm_ds.max(1e-30),
        }
    }

    fn primal_infeasible(&self, dy: &Vector) -> bool {
        let s = &self.settings;
        let norm = dy.amax();
        if norm <= 1e-30 {
            return false;
        }
        let tol = s.eps_prim_inf * norm;
        let mut atdy = Vector::zeros(self.prob.num_vars());
        self.a_orig.mul_t(dy, &mut atdy);
        if atdy.amax() > tol {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            let d = dy[i];
            let bound = if d > 0.0 { self.prob.u[i] } else { self.prob.l[i] };
            if d == 0.0 {
                continue;
            }
            if bound.is_infinite() {
                if d.abs() > tol {
                    return false;
                }
                continue;
            }
            support += bound * d;
        }
        support < -tol
    }

    fn dual_infeasible(&self, dx: &Vector) -> bool {
        let s = &self.settings;
        let norm = dx.amax();
        if norm <= 1e-30 {
            return false;
        }
        let tol = s.eps_dual_inf * norm;
        if (&self.prob.p * dx).amax() > tol || self.prob.q.dot(dx) > -tol {
            return false;
        }
        let mut adx = Vector::zeros(self.prob.num_constraints());
        self.a_orig.mul(dx, &mut adx);
        (0..adx.len()).all(|i| match (self.prob.l[i].is_infinite(), self.prob.u[i].is_infinite()) {
            (true, true) => true,
            (false, true) => adx[i] >= -tol,
            (true, false) => adx[i] <= tol,
            (false, false) => adx[i].abs() <= tol,
        })
    }

    fn unscale(&self, it: &Iterate) -> (Vector, Vector, Vector) {
        let sc = &self.sc;
        (
            it.x.component_mul(&sc.d),
            it.z.component_div(&sc.e),
            it.y.component_mul(&sc.e) / sc.cost,
        )
    }
}

/// Which side of constraint `i` is held with equality in the polishing system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    Lower,
    Upper,
    Fixed,
}

/// Solves the equality-constrained KKT system for the given active sides by regularized
/// factorization plus iterative refinement.
fn kkt_on_active(prob: &QpProblem, sides: &[Side], x0: &Vector, y0: &Vector) -> Option<(Vector, Vector)> {
    let n = prob.num_vars();
    let c = prob.num_constraints();
    let active: Vec<(usize, f64)> = (0..c)
        .filter_map(|i| match sides[i] {
            Side::Free => None,
            Side::Lower | Side::Fixed => Some((i, prob.l[i])),
            Side::Upper => Some((i, prob.u[i])),
        })
        .collect();
    let k = active.len();
    let dim = n + k;
    let delta = 1e-9 * (1.0 + linalg::max_abs(&prob.p));
    let mut kkt = Mat::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&prob.p);
    let mut b = Vector::zeros(dim);
    b.rows_mut(0, n).copy_from(&(-&prob.q));
    for (r, &(i, bound)) in active.iter().enumerate() {
        for j in 0..n {
            let v = prob.a[(i, j)];
            kkt[(n + r, j)] = v;
            kkt[(j, n + r)] = v;
        }
        b[n + r] = bound;
    }
    let mut reg = kkt.clone();
    for j in 0..n {
        reg[(j, j)] += delta;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= delta;
    }
    let lu = reg.lu();
    let mut sol = Vector::zeros(dim);
    sol.rows_mut(0, n).copy_from(x0);
    for (r, &(i, _)) in active.iter().enumerate() {
        sol[n + r] = y0[i];
    }
    let tol = 1e-13 * (1.0 + b.amax());
    for _ in 0..50 {
        let resid = &b - &kkt * &sol;
        if resid.amax() < tol {
            break;
        }
        sol += lu.solve(&resid)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y = Vector::zeros(c);
    for (r, &(i, _)) in active.iter().enumerate() {
        y[i] = sol[n + r];
    }
    Some((x, y))
}

/// Active-set polishing from an approximate primal-dual pair. Constraints whose multiplier
/// has the wrong sign are released and violated ones are added until the set is stable.
fn polish(prob: &QpProblem, x: &Vector, z: &Vector, y: &Vector, eps_dual: f64) -> Option<(Vector, Vector)> {
    let c = prob.num_constraints();
    let mut sides: Vec<Side> = (0..c)
        .map(|i| {
            let (lo, hi) = (prob.l[i], prob.u[i]);
            if lo == hi {
                Side::Fixed
            } else if z[i] - lo < -y[i] {
                Side::Lower
            } else if hi - z[i] < y[i] {
                Side::Upper
            } else {
                Side::Free
            }
        })
        .collect();
    let (mut xp, mut yp) = (x.clone(), y.clone());
    for _ in 0..12 {
        let (xs, ys) = kkt_on_active(prob, &sides, &xp, &yp)?;
        xp = xs;
        yp = ys;
        let ax = &prob.a * &xp;
        let scale = 1.0 + ax.amax();
        let ptol = 1e-10 * scale;
        let dtol = eps_dual.min(1e-9 * (1.0 + yp.amax()));
        let mut changed = false;
        for i in 0..c {
            let next = match sides[i] {
                Side::Lower if yp[i] > dtol => Side::Free,
                Side::Upper if yp[i] < -dtol => Side::Free,
                Side::Free if ax[i] > prob.u[i] + ptol => Side::Upper,
                Side::Free if ax[i] < prob.l[i] - ptol => Side::Lower,
                s => s,
            };
            if next != sides[i] {
                sides[i] = next;
                changed = true;
            }
        }
        if !changed {
            return Some((xp, yp));
        }
    }
    None
}

/// Accepts a polished pair if it is a KKT point to the solver tolerances.
fn polish_accepted(prob: &QpProblem, xp: &Vector, yp: &Vector, eps_prim: f64, eps_dual: f64) -> Option<(f64, f64)> {
    let res = kkt_residuals(prob, xp, yp);
    let az = &prob.a * xp;
    let scale = 1.0 + az.amax();
    let tight = 1e-9 * scale;
    for i in 0..yp.len() {
        let (lo, hi) = (prob.l[i], prob.u[i]);
        if lo == hi {
            continue;
        }
        if (yp[i] > eps_dual && (hi - az[i]).abs() > tight) || (yp[i] < -eps_dual && (az[i] - lo).abs() > tight) {
            return None;
        }
    }
    (res.primal <= eps_prim.min(tight) && res.dual <= eps_dual).then(|| (res.primal.max(0.0), res.dual))
}

/// Solves `prob` starting from the primal point `warm` when given.
pub fn solve(prob: &QpProblem, settings: &QpSettings, warm: Option<&Vector>) -> Result<QpSolution> {
    prob.check()?;
    let n = prob.num_vars();
    let c = prob.num_constraints();
    let sc = equilibrate(prob, settings.scaling_iters);
    let a_s = SparseRows::new(&sc.a);
    let mut admm = Admm {
        prob,
        sc,
        a_s,
        a_orig: SparseRows::new(&prob.a),
        rho: Vector::zeros(c),
        settings: *settings,
    };
    let mut rho = settings.rho;
    admm.set_rho(rho);
    let mut chol = admm.factor()?;
    let (sigma, alpha) = (settings.sigma, settings.alpha_relax);

    let mut it_state = Iterate {
        x: warm
            .map(|w| w.component_div(&admm.sc.d))
            .unwrap_or_else(|| Vector::zeros(n)),
        z: Vector::zeros(c),
        y: Vector::zeros(c),
    };
    admm.a_s.mul(&it_state.x, &mut it_state.z);
    for i in 0..c {
        it_state.z[i] = project(it_state.z[i], admm.sc.l[i], admm.sc.u[i]);
    }

    let mut rhs = Vector::zeros(n);
    let mut tmp_c = Vector::zeros(c);
    let mut z_tilde = Vector::zeros(c);
    let mut prim_streak = 0;
    let mut dual_streak = 0;
    let mut last = (f64::INFINITY, f64::INFINITY);
    let mut next_polish = 0;
    let mut x_prev = it_state.x.clone();
    let mut y_prev = it_state.y.clone();

    for iter in 1..=settings.max_iter {
        let st = &mut it_state;
        let check = iter % settings.check_every == 0 || iter == settings.max_iter;
        if check {
            x_prev.copy_from(&st.x);
            y_prev.copy_from(&st.y);
        }
        for i in 0..c {
            tmp_c[i] = admm.rho[i] * st.z[i] - st.y[i];
        }
        admm.a_s.mul_t(&tmp_c, &mut rhs);
        rhs.axpy(sigma, &st.x, 1.0);
        rhs -= &admm.sc.q;
        chol.solve_mut(&mut rhs);
        admm.a_s.mul(&rhs, &mut z_tilde);
        for j in 0..n {
            st.x[j] = alpha * rhs[j] + (1.0 - alpha) * st.x[j];
        }
        for i in 0..c {
            let relaxed = alpha * z_tilde[i] + (1.0 - alpha) * st.z[i];
            let z_new = project(relaxed + st.y[i] / admm.rho[i], admm.sc.l[i], admm.sc.u[i]);
            st.y[i] += admm.rho[i] * (relaxed - z_new);
            st.z[i] = z_new;
        }
        if !check {
            continue;
        }

        let res = admm.residuals(st);
        last = (res.prim, res.dual);
        let converged = res.prim <= res.eps_prim && res.dual <= res.eps_dual;
        let near = res.prim <= settings.polish_gate * res.eps_prim && res.dual <= settings.polish_gate * res.eps_dual;

        if settings.polish && iter >= next_polish && (converged || near) {
            next_polish = iter + settings.polish_every;
            let (x, z, y) = admm.unscale(st);
            if let Some((xp, yp)) = polish(prob, &x, &z, &y, res.eps_dual) {
                if let Some((pr, dr)) = polish_accepted(prob, &xp, &yp, res.eps_prim, res.eps_dual) {
                    return Ok(QpSolution {
                        z: xp,
                        dual: yp,
                        status: QpStatus::Solved,
                        primal_res: pr,
                        dual_res: dr,
                        iterations: iter,
                        polished: true,
                    });
                }
            }
        }
        if converged {
            let (x, _, y) = admm.unscale(st);
            return Ok(QpSolution {
                z: x,
                dual: y,
                status: QpStatus::Solved,
                primal_res: res.prim,
                dual_res: res.dual,
                iterations: iter,
                polished: false,
            });
        }

        let dy = (&st.y - &y_prev).component_mul(&admm.sc.e);
        let dx = (&st.x - &x_prev).component_mul(&admm.sc.d);
        prim_streak = if admm.primal_infeasible(&dy) {
            prim_streak + settings.check_every
        } else {
            0
        };
        dual_streak = if admm.dual_infeasible(&dx) {
            dual_streak + settings.check_every
        } else {
            0
        };
        if prim_streak >= settings.infeasibility_streak {
            return Ok(QpSolution {
                z: st.x.component_mul(&admm.sc.d),
                dual: dy,
                status: QpStatus::PrimalInfeasible,
                primal_res: res.prim,
                dual_res: res.dual,
                iterations: iter,
                polished: false,
            });
        }
        if dual_streak >= settings.infeasibility_streak {
            return Ok(QpSolution {
                z: dx,
                dual: st.y.component_mul(&admm.sc.e) / admm.sc.cost,
                status: QpStatus::DualInfeasible,
                primal_res: res.prim,
                dual_res: res.dual,
                iterations: iter,
                polished: false,
            });
        }

        if settings.adaptive_rho && iter % settings.adapt_every == 0 && res.rel_dual > 0.0 {
            let proposal = (rho * (res.rel_prim / res.rel_dual).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if proposal > 5.0 * rho || proposal < 0.2 * rho {
                rho = proposal;
                admm.set_rho(rho);
                chol = admm.factor()?;
            }
        }
    }
    let (x, _, y) = admm.unscale(&it_state);
    Ok(QpSolution {
        z: x,
        dual: y,
        status: QpStatus::MaxIterations,
        primal_res: last.0,
        dual_res: last.1,
        iterations: settings.max_iter,
        polished: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unconstrained(p: Mat, q: Vector) -> QpProblem {
        let n = q.len();
        QpProblem {
            p,
            q,
            a: Mat::zeros(0, n),
            l: Vector::zeros(0),
            u: Vector::zeros(0),
        }
    }

    #[test]
    fn shifted_quadratic() {
        // (z - 1)^2 = z^2 - 2z + 1
        let prob = unconstrained(Mat::from_element(1, 1, 2.0), Vector::from_element(1, -2.0));
        let sol = solve(&prob, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.z[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn projection_onto_halfspace() {
        let n = 3;
        let mut a = Mat::zeros(1, n);
        a[(0, 0)] = 1.0;
        let prob = QpProblem {
            p: Mat::identity(n, n),
            q: Vector::zeros(n),
            a,
            l: Vector::from_element(1, 2.0),
            u: Vector::from_element(1, f64::INFINITY),
        };
        let sol = solve(&prob, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.z - Vector::from_vec(vec![2.0, 0.0, 0.0])).amax() < 1e-6);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let a = Mat::from_column_slice(2, 1, &[1.0, 1.0]);
        let prob = QpProblem {
            p: Mat::identity(1, 1),
            q: Vector::zeros(1),
            a,
            l: Vector::from_vec(vec![f64::NEG_INFINITY, 1.0]),
            u: Vector::from_vec(vec![-1.0, f64::INFINITY]),
        };
        let sol = solve(&prob, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn unbounded_below_is_dual_infeasible() {
        let prob = unconstrained(Mat::zeros(1, 1), Vector::from_element(1, 1.0));
        let sol = solve(&prob, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::DualInfeasible);
    }

    #[test]
    fn indefinite_hessian_rejected() {
        let prob = unconstrained(Mat::from_element(1, 1, -1.0), Vector::zeros(1));
        assert!(matches!(
            solve(&prob, &QpSettings::default(), None),
            Err(Error::QpInput(_))
        ));
    }

    #[test]
    fn residuals_at_unconstrained_minimum() {
        let p = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let q = Vector::from_vec(vec![-2.0, -4.0]);
        let prob = QpProblem {
            p,
            q,
            a: Mat::identity(2, 2),
            l: Vector::from_element(2, -10.0),
            u: Vector::from_element(2, 10.0),
        };
        let r = kkt_residuals(&prob, &Vector::from_vec(vec![1.0, 1.0]), &Vector::zeros(2));
        assert!(r.primal <= 0.0 && r.dual < 1e-15 && r.complementarity == 0.0);
        let r = kkt_residuals(&prob, &Vector::from_vec(vec![13.0, -11.5]), &Vector::zeros(2));
        assert_eq!(r.primal, 3.0);
    }
}
