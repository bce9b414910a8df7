//! The per-recalculation quadratic program over saturated-innovation policies.
//!
//! Decision vector layout: `eta` (`Nm` entries), then the free `Theta` entries block by block
//! in [`PolicyParams::block_index`] order (each `m x q` block row-major), then one slack per
//! policy entry bounding its absolute value.

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::kalman::SteadyGains;
use crate::linalg::{self, Mat, Vector};
use crate::model::{self, StackedMatrices, SystemSpec};
use crate::moments::{self, MomentSet};
use crate::policy::{sat_r_zeta, PolicyParams, PsiSpec};
use crate::qpsolver::{self, QpProblem, QpSettings, QpStatus};

/// Tolerance on the stability rows when checking a returned policy.
pub const STABILITY_TOL: f64 = 1e-8;
/// Relative weight of the tie-break on the known-innovation gains.
const TIE_BREAK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Saturation radius of the drift target.
    pub r: f64,
    /// Activation margin: a row is added once a coordinate leaves `[-(r + epsilon), r + epsilon]`.
    pub epsilon: f64,
    /// Required per-coordinate drift.
    pub zeta: f64,
}

impl Thresholds {
    /// `zeta = fraction * zeta_max(u_max)`; `zeta` is set to 0 when there is no orthogonal part.
    pub fn from_fraction(dec: &Decomposition, u_max: f64, r: f64, epsilon: f64, fraction: f64) -> Result<Self> {
        let zeta = match dec.zeta_max {
            Some(_) => fraction * dec.zeta_bound(u_max)?,
            None => 0.0,
        };
        Ok(Thresholds { r, epsilon, zeta })
    }
}

/// Position of one policy entry inside the augmented gain `[eta | Theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    /// Control row, `0..Nm`.
    pub row: usize,
    /// 0 for `eta`, `1 + i q + j` for innovation offset `i`, component `j`.
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub horizon: usize,
    pub m: usize,
    pub q: usize,
    pub entries: Vec<Entry>,
}

impl VarMap {
    pub fn new(horizon: usize, m: usize, q: usize) -> Self {
        let mut entries = Vec::new();
        for row in 0..horizon * m {
            entries.push(Entry { row, col: 0 });
        }
        for l in 0..horizon {
            for i in 0..=l {
                for a in 0..m {
                    for b in 0..q {
                        entries.push(Entry {
                            row: l * m + a,
                            col: 1 + i * q + b,
                        });
                    }
                }
            }
        }
        VarMap { horizon, m, q, entries }
    }

    pub fn num_policy(&self) -> usize {
        self.entries.len()
    }

    pub fn num_vars(&self) -> usize {
        2 * self.entries.len()
    }

    pub fn slack(&self, k: usize) -> usize {
        self.entries.len() + k
    }

    pub fn pack(&self, params: &PolicyParams) -> Vector {
        let np = self.num_policy();
        let mut z = Vector::zeros(2 * np);
        let theta = params.assemble_theta();
        for (k, e) in self.entries.iter().enumerate() {
            let v = if e.col == 0 {
                params.eta[e.row]
            } else {
                theta[(e.row, e.col - 1)]
            };
            z[k] = v;
            z[np + k] = v.abs();
        }
        z
    }

    pub fn unpack(&self, z: &Vector) -> PolicyParams {
        let (m, q) = (self.m, self.q);
        let mut params = PolicyParams::zeros(self.horizon, m, q);
        for (k, e) in self.entries.iter().enumerate() {
            if e.col == 0 {
                params.eta[e.row] = z[k];
            } else {
                let (l, a) = (e.row / m, e.row % m);
                let (i, b) = ((e.col - 1) / q, (e.col - 1) % q);
                params.theta_mut(l, i)[(a, b)] = z[k];
            }
        }
        params
    }
}

#[derive(Debug, Clone)]
pub struct OcpContext {
    pub spec: SystemSpec,
    pub stack: StackedMatrices,
    pub dec: Decomposition,
    pub moments: MomentSet,
    pub psi: PsiSpec,
    pub thresholds: Thresholds,
    pub u_max: f64,
    pub var_map: VarMap,
    pub settings: QpSettings,
    /// `cal_b' cal_q cal_a`, maps `x_hat` to the linear coefficient of `eta`.
    g_map: Mat,
    /// Linear coefficient of the random-innovation gains, `mN x qN`.
    lin_random: Mat,
    /// Stability map `(A_o^kappa)' R_kappa`, `d_o x kappa m`.
    w_stab: Mat,
    /// `A_o^kappa`.
    a_o_kappa: Mat,
    /// State-independent part of the constant term.
    const_noise: f64,
    /// `cal_a' cal_q cal_a`.
    aqa: Mat,
}

impl OcpContext {
    pub fn new(
        spec: &SystemSpec,
        gains: &SteadyGains,
        dec: Decomposition,
        moments: MomentSet,
        psi: PsiSpec,
        thresholds: Thresholds,
    ) -> Result<Self> {
        spec.check_dimensions()?;
        let expected = moments::spec_digest(spec, &psi, gains);
        moments.check_digest(&expected)?;
        let (d, m, q, n) = (spec.state_dim(), spec.input_dim(), spec.output_dim(), spec.horizon);
        if dec.d_o > 0 {
            let zeta_max = dec.zeta_bound(spec.u_max)?;
            if !(thresholds.zeta > 0.0 && thresholds.zeta < zeta_max) {
                return Err(Error::Parameter(format!(
                    "zeta = {} must lie strictly inside (0, {zeta_max})",
                    thresholds.zeta
                )));
            }
            if dec.kappa > n {
                return Err(Error::Parameter(format!(
                    "reachability index {} exceeds the horizon {n}",
                    dec.kappa
                )));
            }
        }
        if !(thresholds.r > 0.0 && thresholds.epsilon >= 0.0) {
            return Err(Error::Parameter("need r > 0 and epsilon >= 0".into()));
        }
        if moments.sigma_psi.nrows() != q * n || moments.sigma_psi_w.ncols() != d * n {
            return Err(Error::dim("moment set", q * n, moments.sigma_psi.nrows()));
        }

        let stack = model::build_stacked(spec);
        let bq = stack.cal_b.transpose() * &stack.cal_q;
        let g_map = &bq * &stack.cal_a;
        let dqb = stack.cal_d.transpose() * bq.transpose();
        let aqb = stack.cal_a.transpose() * bq.transpose();
        let lin_random = (&moments.sigma_psi_w * dqb + &moments.sigma_e_psi * aqb).transpose();
        let aqa = stack.cal_a.transpose() * &stack.cal_q * &stack.cal_a;
        let dqd = stack.cal_d.transpose() * &stack.cal_q * &stack.cal_d;
        let w_cov = linalg::block_diag(&vec![spec.sigma_w.clone(); n]);
        let const_noise = (&aqa * &gains.p).trace() + (dqd * w_cov).trace();

        let (a_o_kappa, w_stab) = if dec.d_o > 0 {
            let ak = linalg::mat_pow(&dec.a_o, dec.kappa);
            let w = ak.transpose() * &dec.r_kappa;
            (ak, w)
        } else {
            (Mat::zeros(0, 0), Mat::zeros(0, 0))
        };

        Ok(OcpContext {
            spec: spec.clone(),
            stack,
            dec,
            moments,
            psi,
            thresholds,
            u_max: spec.u_max,
            var_map: VarMap::new(n, m, q),
            settings: QpSettings::default(),
            g_map,
            lin_random,
            w_stab,
            a_o_kappa,
            const_noise,
            aqa,
        })
    }

    pub fn psi0(&self, x_hat: &Vector, y: &Vector) -> Vector {
        self.psi.apply(&(y - &self.spec.c * x_hat))
    }
}

/// `(P, q, constant)` so that the expected horizon cost equals `1/2 z'Pz + q'z + constant`.
pub fn build_objective(ctx: &OcpContext, x_hat: &Vector, psi0: &Vector) -> (Mat, Vector, f64) {
    let vm = &ctx.var_map;
    let q = vm.q;
    let np = vm.num_policy();
    let alpha = &ctx.stack.alpha;
    let sigma = &ctx.moments.sigma_psi;
    // known part of the augmented innovation: [1, psi0]
    let known = |c: usize| if c == 0 { 1.0 } else { psi0[c - 1] };
    let m_tilde = |c1: usize, c2: usize| -> f64 {
        let k1 = c1 <= q;
        let k2 = c2 <= q;
        match (k1, k2) {
            (true, true) => known(c1) * known(c2),
            (false, false) => sigma[(c1 - 1 - q, c2 - 1 - q)],
            _ => 0.0,
        }
    };
    let n = vm.num_vars();
    let mut p = Mat::zeros(n, n);
    for (k, ek) in vm.entries.iter().enumerate() {
        for (l, el) in vm.entries.iter().enumerate().skip(k) {
            let mt = m_tilde(ek.col, el.col);
            if mt == 0.0 {
                continue;
            }
            let v = 2.0 * alpha[(ek.row, el.row)] * mt;
            p[(k, l)] = v;
            p[(l, k)] = v;
        }
    }
    let reg = TIE_BREAK * alpha.diagonal().mean();
    for (k, e) in vm.entries.iter().enumerate() {
        if e.col >= 1 && e.col <= q {
            p[(k, k)] += 2.0 * reg;
        }
    }

    let g = &ctx.g_map * x_hat;
    let mut lin = Vector::zeros(n);
    for (k, e) in vm.entries.iter().enumerate() {
        lin[k] = 2.0
            * if e.col == 0 {
                g[e.row]
            } else if e.col <= q {
                g[e.row] * psi0[e.col - 1]
            } else {
                ctx.lin_random[(e.row, e.col - 1 - q)]
            };
    }
    debug_assert_eq!(np * 2, n);
    let constant = x_hat.dot(&(&ctx.aqa * x_hat)) + ctx.const_noise;
    (p, lin, constant)
}

/// Stability-row indices `(j, sign)` triggered by `x_hat_o`: sign `+1` means `v_j <= -zeta`.
pub fn triggered_rows(ctx: &OcpContext, x_hat_o: &Vector) -> Vec<(usize, f64)> {
    let level = ctx.thresholds.r + ctx.thresholds.epsilon;
    (0..ctx.dec.d_o)
        .filter_map(|j| {
            if x_hat_o[j] >= level {
                Some((j, 1.0))
            } else if x_hat_o[j] <= -level {
                Some((j, -1.0))
            } else {
                None
            }
        })
        .collect()
}

/// Coefficients of `v_j(z)` over the decision vector.
fn stability_row(ctx: &OcpContext, j: usize, psi0: &Vector) -> Vector {
    let vm = &ctx.var_map;
    let q = vm.q;
    let span = ctx.dec.kappa * vm.m;
    let mut row = Vector::zeros(vm.num_vars());
    for (k, e) in vm.entries.iter().enumerate() {
        if e.row >= span || e.col > q {
            continue;
        }
        let w = ctx.w_stab[(j, e.row)];
        row[k] = if e.col == 0 { w } else { w * psi0[e.col - 1] };
    }
    row
}

/// `(A, l, u)` for the hard input bound and the triggered stability rows.
pub fn build_constraints(ctx: &OcpContext, x_hat_o: &Vector, psi0: &Vector) -> (Mat, Vector, Vector) {
    let vm = &ctx.var_map;
    let np = vm.num_policy();
    let n = vm.num_vars();
    let rows_u = vm.horizon * vm.m;
    let stab = triggered_rows(ctx, x_hat_o);
    let c = 2 * np + rows_u + stab.len();
    let mut a = Mat::zeros(c, n);
    let mut l = Vector::zeros(c);
    let mut u = Vector::zeros(c);
    for k in 0..np {
        a[(2 * k, k)] = 1.0;
        a[(2 * k, vm.slack(k))] = -1.0;
        l[2 * k] = f64::NEG_INFINITY;
        a[(2 * k + 1, k)] = 1.0;
        a[(2 * k + 1, vm.slack(k))] = 1.0;
        u[2 * k + 1] = f64::INFINITY;
    }
    for (k, e) in vm.entries.iter().enumerate() {
        let coef = if e.col == 0 { 1.0 } else { ctx.psi.psi_max };
        a[(2 * np + e.row, vm.slack(k))] = coef;
    }
    for r in 0..rows_u {
        l[2 * np + r] = f64::NEG_INFINITY;
        u[2 * np + r] = ctx.u_max;
    }
    let zeta = ctx.thresholds.zeta;
    for (s, &(j, sign)) in stab.iter().enumerate() {
        let idx = 2 * np + rows_u + s;
        a.row_mut(idx).copy_from(&stability_row(ctx, j, psi0).transpose());
        if sign > 0.0 {
            l[idx] = f64::NEG_INFINITY;
            u[idx] = -zeta;
        } else {
            l[idx] = zeta;
            u[idx] = f64::INFINITY;
        }
    }
    (a, l, u)
}

pub fn build_qp(ctx: &OcpContext, x_hat: &Vector, psi0: &Vector) -> (QpProblem, f64) {
    let (p, q, constant) = build_objective(ctx, x_hat, psi0);
    let x_hat_o = ctx.dec.orthogonal_part(x_hat);
    let (a, l, u) = build_constraints(ctx, &x_hat_o, psi0);
    (QpProblem { p, q, a, l, u }, constant)
}

/// Open-loop drift policy `eta_{1:kappa m} = -R_kappa^+ A_o^kappa sat_{r,zeta}(x_hat_o)`, `Theta = 0`.
pub fn fallback_point(ctx: &OcpContext, x_hat_o: &Vector) -> Result<PolicyParams> {
    let vm = &ctx.var_map;
    let mut params = PolicyParams::zeros(vm.horizon, vm.m, vm.q);
    if ctx.dec.d_o == 0 {
        return Ok(params);
    }
    let th = ctx.thresholds;
    let sat = sat_r_zeta(x_hat_o, th.r, th.zeta)?;
    let eta = -(&ctx.dec.r_kappa_pinv * (&ctx.a_o_kappa * sat));
    params.eta.rows_mut(0, eta.len()).copy_from(&eta);
    Ok(params)
}

/// Largest violation of the triggered stability rows by `params`.
pub fn stability_violation(ctx: &OcpContext, params: &PolicyParams, x_hat_o: &Vector, psi0: &Vector) -> f64 {
    let z = ctx.var_map.pack(params);
    let zeta = ctx.thresholds.zeta;
    triggered_rows(ctx, x_hat_o)
        .into_iter()
        .map(|(j, sign)| {
            let v = stability_row(ctx, j, psi0).dot(&z);
            if sign > 0.0 {
                v + zeta
            } else {
                zeta - v
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub params: PolicyParams,
    pub objective_value: f64,
    pub status: QpStatus,
    pub fallback_used: bool,
    pub iterations: usize,
}

/// Value of the horizon cost for `params` at the given estimate and known innovation.
pub fn objective_value(ctx: &OcpContext, x_hat: &Vector, psi0: &Vector, params: &PolicyParams) -> f64 {
    let (p, q, constant) = build_objective(ctx, x_hat, psi0);
    let z = ctx.var_map.pack(params);
    0.5 * z.dot(&(&p * &z)) + q.dot(&z) + constant
}

/// Shrinks rows whose hard-bound margin is marginally negative after the solve.
fn repair_hard_bound(params: &mut PolicyParams, psi_max: f64, u_max: f64) {
    let margin = params.hard_bound_margin(psi_max, u_max);
    let (m, n) = (params.m, params.horizon);
    for row in 0..n * m {
        if margin[row] >= 0.0 {
            continue;
        }
        let used = u_max - margin[row];
        let scale = u_max / used * (1.0 - 1e-12);
        params.eta[row] *= scale;
        let (l, a) = (row / m, row % m);
        for i in 0..=l {
            let block = params.theta_mut(l, i);
            for b in 0..block.ncols() {
                block[(a, b)] *= scale;
            }
        }
    }
}

pub fn solve_ocp(ctx: &OcpContext, x_hat: &Vector, y_t: &Vector) -> Result<OcpSolution> {
    let psi0 = ctx.psi0(x_hat, y_t);
    let x_hat_o = ctx.dec.orthogonal_part(x_hat);
    let (prob, constant) = build_qp(ctx, x_hat, &psi0);
    let fallback = fallback_point(ctx, &x_hat_o)?;
    let warm = ctx.var_map.pack(&fallback);
    let fallback_value = 0.5 * warm.dot(&(&prob.p * &warm)) + prob.q.dot(&warm) + constant;
    let sol = qpsolver::solve(&prob, &ctx.settings, Some(&warm))?;

    let use_fallback = |status| OcpSolution {
        params: fallback.clone(),
        objective_value: fallback_value,
        status,
        fallback_used: true,
        iterations: sol.iterations,
    };
    match sol.status {
        QpStatus::PrimalInfeasible => {
            return Err(Error::Contradiction(format!(
                "policy QP reported infeasible after {} iterations although the drift policy is feasible",
                sol.iterations
            )))
        }
        QpStatus::Solved => {}
        other => return Ok(use_fallback(other)),
    }
    let mut params = ctx.var_map.unpack(&sol.z);
    repair_hard_bound(&mut params, ctx.psi.psi_max, ctx.u_max);
    if stability_violation(ctx, &params, &x_hat_o, &psi0) > STABILITY_TOL {
        return Ok(use_fallback(sol.status));
    }
    let z = ctx.var_map.pack(&params);
    let value = 0.5 * z.dot(&(&prob.p * &z)) + prob.q.dot(&z) + constant;
    if value > fallback_value + 1e-6 * (1.0 + fallback_value.abs()) {
        return Ok(use_fallback(sol.status));
    }
    Ok(OcpSolution {
        params,
        objective_value: value,
        status: sol.status,
        fallback_used: false,
        iterations: sol.iterations,
    })
}

/// Smallest `u_max` for which a norm-ball drift constraint over `n_r` steps is feasible:
/// `sigma_1(R_{n_r}(A_o, B_o)^+) (beta + epsilon' / 2)`.
pub fn prior_feasibility_threshold(dec: &Decomposition, beta_hat: f64, epsilon_prime: f64, n_r: usize) -> f64 {
    if dec.d_o == 0 {
        return 0.0;
    }
    let r = model::reachability_matrix(&dec.a_o, &dec.b_o, n_r);
    linalg::sigma_max(&linalg::pinv(&r)) * (beta_hat + 0.5 * epsilon_prime)
}
