//! Closed-loop receding-horizon simulation, the mean-square statistic, sweeps and the drift audit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{self, Decomposition};
use crate::error::{Error, Result};
use crate::kalman::{self, SteadyGains};
use crate::linalg::{self, Mat, Vector};
use crate::model::SystemSpec;
use crate::moments::{self, MomentSet};
use crate::ocp::{self, OcpContext, Thresholds};
use crate::policy::{PolicyParams, PsiSpec};
use crate::qpsolver::QpSettings;

/// Tolerance on recorded controls against the hard bound.
pub const BOUND_TOL: f64 = 1e-9;
/// Minimum events per audited direction before a verdict is given.
pub const MIN_AUDIT_EVENTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Solve the policy QP at each recalculation instant.
    Qp,
    /// Apply the open-loop drift policy only.
    FallbackOnly,
}

/// Multipliers on the sampled plant noises; the filter and controller keep the nominal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub x0: f64,
    pub w: f64,
    pub v: f64,
}

impl NoiseScale {
    pub const NOMINAL: NoiseScale = NoiseScale {
        x0: 1.0,
        w: 1.0,
        v: 1.0,
    };
    pub const NONE: NoiseScale = NoiseScale {
        x0: 0.0,
        w: 0.0,
        v: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: SystemSpec,
    pub psi: PsiSpec,
    pub r: f64,
    pub epsilon: f64,
    pub zeta_fraction: f64,
    /// Recalculation interval.
    pub n_r: usize,
    pub steps: usize,
    pub paths: usize,
    pub base_seed: u64,
    pub u_max_sweep: Vec<f64>,
    pub controller: ControllerKind,
    pub noise: NoiseScale,
    pub qp: QpSettings,
}

impl SimConfig {
    /// Defaults: `r = 1`, `epsilon = 0.1`, `zeta = 0.1 zeta_max`, `N_r = kappa`, 90 steps, 100 paths.
    pub fn new(spec: SystemSpec, psi: PsiSpec) -> Result<Self> {
        let dec = decomp::decompose(&spec)?;
        let n_r = dec.kappa.max(1);
        let u_max = spec.u_max;
        Ok(SimConfig {
            spec,
            psi,
            r: 1.0,
            epsilon: 0.1,
            zeta_fraction: 0.1,
            n_r,
            steps: 90,
            paths: 100,
            base_seed: 0,
            u_max_sweep: vec![u_max],
            controller: ControllerKind::Qp,
            noise: NoiseScale::NOMINAL,
            qp: QpSettings::default(),
        })
    }

    pub fn validate(&self, dec: &Decomposition) -> Result<()> {
        let n = self.spec.horizon;
        if self.n_r == 0 || self.n_r > n || (dec.d_o > 0 && self.n_r < dec.kappa) {
            return Err(Error::Config(format!(
                "recalculation interval {} must satisfy kappa = {} <= N_r <= N = {n}",
                self.n_r, dec.kappa
            )));
        }
        if !(self.zeta_fraction > 0.0 && self.zeta_fraction < 1.0) {
            return Err(Error::Config(format!(
                "zeta_fraction {} must lie in (0, 1)",
                self.zeta_fraction
            )));
        }
        if self.u_max_sweep.iter().any(|&u| !(u > 0.0)) {
            return Err(Error::Config("every u_max must be positive".into()));
        }
        Ok(())
    }
}

/// Everything derived once per configuration: stationary gains, decomposition and moments.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: SimConfig,
    pub gains: SteadyGains,
    pub dec: Decomposition,
    pub moments: MomentSet,
}

impl Experiment {
    pub fn new(cfg: SimConfig, moments: MomentSet) -> Result<Self> {
        cfg.spec.ensure_valid()?;
        let gains = kalman::steady_state(&cfg.spec)?;
        let dec = decomp::decompose(&cfg.spec)?;
        cfg.validate(&dec)?;
        moments.check_digest(&moments::spec_digest(&cfg.spec, &cfg.psi, &gains))?;
        Ok(Experiment {
            cfg,
            gains,
            dec,
            moments,
        })
    }

    /// Estimates moments with the given sample count and seed, then builds the experiment.
    pub fn estimate(cfg: SimConfig, samples: usize, seed: u64) -> Result<Self> {
        let gains = kalman::steady_state(&cfg.spec)?;
        let stack = kalman::error_stack(&gains, &cfg.spec, cfg.spec.horizon);
        let ms = moments::estimate_moments(&cfg.spec, &gains, &stack, &cfg.psi, samples, seed)?;
        Self::new(cfg, ms)
    }

    pub fn thresholds(&self, u_max: f64) -> Result<Thresholds> {
        Thresholds::from_fraction(&self.dec, u_max, self.cfg.r, self.cfg.epsilon, self.cfg.zeta_fraction)
    }

    pub fn context(&self, u_max: f64) -> Result<OcpContext> {
        let spec = self.cfg.spec.with_u_max(u_max);
        let mut ctx = OcpContext::new(
            &spec,
            &self.gains,
            self.dec.clone(),
            self.moments.clone(),
            self.cfg.psi,
            self.thresholds(u_max)?,
        )?;
        ctx.settings = self.cfg.qp;
        Ok(ctx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub path_index: usize,
    pub u_max: f64,
    pub zeta: f64,
    /// `||x_t||^2` for `t = 0..steps`.
    pub state_sq_norms: Vec<f64>,
    pub states: Vec<Vector>,
    pub estimates: Vec<Vector>,
    pub controls: Vec<Vector>,
    /// `trace(P_t)` of the filter.
    pub trace_p: Vec<f64>,
    pub solves: usize,
    pub fallback_count: usize,
    pub qp_iterations_total: usize,
    pub max_abs_u: f64,
    pub seed: u64,
}

const ROLE_X0: u64 = 0;
const ROLE_W: u64 = 1;
const ROLE_V: u64 = 2;

fn path_rng(base_seed: u64, path: usize, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(path as u64 * 3 + role);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt_cov: &Mat, scale: f64) -> Vector {
    let z = Vector::from_iterator(
        sqrt_cov.ncols(),
        (0..sqrt_cov.ncols()).map(|_| StandardNormal.sample(rng)),
    );
    sqrt_cov * z * scale
}

/// Simulates one closed-loop path with a prebuilt context.
pub fn run_path_with(exp: &Experiment, ctx: &OcpContext, path_index: usize) -> Result<PathResult> {
    let cfg = &exp.cfg;
    let spec = &ctx.spec;
    let noise = cfg.noise;
    let mut rng_x0 = path_rng(cfg.base_seed, path_index, ROLE_X0);
    let mut rng_w = path_rng(cfg.base_seed, path_index, ROLE_W);
    let mut rng_v = path_rng(cfg.base_seed, path_index, ROLE_V);
    let sqrt_x0 = linalg::psd_sqrt(&spec.sigma_x0);
    let sqrt_w = linalg::psd_sqrt(&spec.sigma_w);
    let sqrt_v = linalg::psd_sqrt(&spec.sigma_v);

    let mut x = gaussian(&mut rng_x0, &sqrt_x0, noise.x0);
    let mut y = &spec.c * &x + gaussian(&mut rng_v, &sqrt_v, noise.v);
    let mut filter = kalman::init_filter(spec, &y)?;

    let steps = cfg.steps;
    let mut out = PathResult {
        path_index,
        u_max: ctx.u_max,
        zeta: ctx.thresholds.zeta,
        state_sq_norms: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        estimates: Vec::with_capacity(steps),
        controls: Vec::with_capacity(steps),
        trace_p: Vec::with_capacity(steps),
        solves: 0,
        fallback_count: 0,
        qp_iterations_total: 0,
        max_abs_u: 0.0,
        seed: cfg.base_seed,
    };
    let mut params = PolicyParams::zeros(spec.horizon, spec.input_dim(), spec.output_dim());
    let mut psi_history: Vec<Vector> = Vec::with_capacity(cfg.n_r);
    for t in 0..steps {
        out.state_sq_norms.push(x.norm_squared());
        out.states.push(x.clone());
        out.estimates.push(filter.x_hat.clone());
        out.trace_p.push(filter.p.trace());

        if t % cfg.n_r == 0 {
            psi_history.clear();
            out.solves += 1;
            params = match cfg.controller {
                ControllerKind::Qp => {
                    let sol = ocp::solve_ocp(ctx, &filter.x_hat, &y)?;
                    out.qp_iterations_total += sol.iterations;
                    out.fallback_count += usize::from(sol.fallback_used);
                    sol.params
                }
                ControllerKind::FallbackOnly => ocp::fallback_point(ctx, &ctx.dec.orthogonal_part(&filter.x_hat))?,
            };
        }
        psi_history.push(ctx.psi.apply(&filter.innovation(spec, &y)));
        let u = params.eval_transformed(&psi_history, t % cfg.n_r)?;
        out.max_abs_u = out.max_abs_u.max(u.amax());
        out.controls.push(u.clone());

        x = &spec.a * &x + &spec.b * &u + gaussian(&mut rng_w, &sqrt_w, noise.w);
        y = &spec.c * &x + gaussian(&mut rng_v, &sqrt_v, noise.v);
        filter = kalman::step(&filter, &u, &y, spec)?;
    }
    Ok(out)
}

pub fn run_path(exp: &Experiment, u_max: f64, path_index: usize) -> Result<PathResult> {
    run_path_with(exp, &exp.context(u_max)?, path_index)
}

/// All configured paths at one bound, in path order.
pub fn run_paths(exp: &Experiment, u_max: f64) -> Result<Vec<PathResult>> {
    let ctx = exp.context(u_max)?;
    (0..exp.cfg.paths)
        .into_par_iter()
        .map(|k| run_path_with(exp, &ctx, k))
        .collect()
}

/// Path-averaged `||x_t||^2` per time step.
pub fn mean_sq_profile(results: &[PathResult]) -> Result<Vec<f64>> {
    let first = results.first().ok_or_else(|| Error::Empty("no paths".into()))?;
    let steps = first.state_sq_norms.len();
    if results.iter().any(|r| r.state_sq_norms.len() != steps) {
        return Err(Error::dim("path lengths", steps, "mixed"));
    }
    let n = results.len() as f64;
    Ok((0..steps)
        .map(|t| results.iter().map(|r| r.state_sq_norms[t]).sum::<f64>() / n)
        .collect())
}

/// Max over time of the path-averaged squared state norm.
pub fn empirical_ms_bound(results: &[PathResult]) -> Result<f64> {
    let profile = mean_sq_profile(results)?;
    profile
        .into_iter()
        .reduce(f64::max)
        .ok_or_else(|| Error::Empty("paths have no steps".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub u_max: f64,
    pub ms_bound: f64,
    pub fallback_rate: f64,
    pub mean_qp_iters: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// Largest `|u_t^(i)|` seen at this bound.
    pub max_abs_u: f64,
}

pub fn summarize(u_max: f64, results: &[PathResult], cfg: &SimConfig) -> Result<SweepRow> {
    let solves: usize = results.iter().map(|r| r.solves).sum();
    let fallbacks: usize = results.iter().map(|r| r.fallback_count).sum();
    let iters: usize = results.iter().map(|r| r.qp_iterations_total).sum();
    Ok(SweepRow {
        u_max,
        ms_bound: empirical_ms_bound(results)?,
        fallback_rate: if solves > 0 {
            fallbacks as f64 / solves as f64
        } else {
            0.0
        },
        mean_qp_iters: if solves > 0 { iters as f64 / solves as f64 } else { 0.0 },
        paths: results.len(),
        steps: cfg.steps,
        seed: cfg.base_seed,
        max_abs_u: results.iter().map(|r| r.max_abs_u).fold(0.0, f64::max),
    })
}

pub fn sweep(exp: &Experiment) -> Result<Vec<SweepRow>> {
    exp.cfg
        .u_max_sweep
        .iter()
        .map(|&u| summarize(u, &run_paths(exp, u)?, &exp.cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftStat {
    pub events: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `None` when there are fewer than [`MIN_AUDIT_EVENTS`] events.
    pub flagged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentDrift {
    pub component: usize,
    /// Events with the rotated coordinate above `r + epsilon`.
    pub above: DriftStat,
    /// Events below `-(r + epsilon)`.
    pub below: DriftStat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub zeta: f64,
    pub components: Vec<ComponentDrift>,
    pub total_events: usize,
}

impl DriftReport {
    /// Some verdict exists, none is flagged, and at least [`MIN_AUDIT_EVENTS`] events qualified.
    pub fn passed(&self) -> bool {
        let verdicts: Vec<bool> = self
            .components
            .iter()
            .flat_map(|c| [c.above.flagged, c.below.flagged])
            .flatten()
            .collect();
        self.total_events >= MIN_AUDIT_EVENTS && !verdicts.is_empty() && verdicts.iter().all(|f| !f)
    }
}

fn drift_stat(values: &[f64], flag: impl Fn(f64, f64) -> bool) -> DriftStat {
    let n = values.len();
    if n == 0 {
        return DriftStat {
            events: 0,
            mean: f64::NAN,
            stderr: f64::NAN,
            flagged: None,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let stderr = (var / n as f64).sqrt();
    let flagged = (n >= MIN_AUDIT_EVENTS).then(|| flag(mean, stderr));
    DriftStat {
        events: n,
        mean,
        stderr,
        flagged,
    }
}

/// Audits the drift of `z_t = (A_o')^t x_hat_o_t` over one recalculation block, from each
/// recalculation instant at or after `5 d` steps.
pub fn drift_audit(results: &[PathResult], dec: &Decomposition, cfg: &SimConfig) -> Result<DriftReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::Empty("no paths to audit".into()))?;
    if dec.d_o == 0 {
        return Err(Error::NotApplicable("no orthogonal part to audit".into()));
    }
    let zeta = first.zeta;
    let level = cfg.r + cfg.epsilon;
    let warmup = 5 * cfg.spec.state_dim();
    let kappa = dec.kappa;
    let a_o_t = dec.a_o.transpose();
    let mut above = vec![Vec::new(); dec.d_o];
    let mut below = vec![Vec::new(); dec.d_o];
    for res in results {
        let steps = res.estimates.len();
        let mut power = Mat::identity(dec.d_o, dec.d_o);
        let mut power_t = 0;
        let mut t = 0;
        while t + kappa < steps {
            if t >= warmup {
                while power_t < t {
                    power = &a_o_t * &power;
                    power_t += 1;
                }
                let z_now = &power * dec.orthogonal_part(&res.estimates[t]);
                let z_next = &power * linalg::mat_pow(&a_o_t, kappa) * dec.orthogonal_part(&res.estimates[t + kappa]);
                for j in 0..dec.d_o {
                    let diff = z_next[j] - z_now[j];
                    if z_now[j] >= level {
                        above[j].push(diff);
                    } else if z_now[j] <= -level {
                        below[j].push(diff);
                    }
                }
            }
            t += cfg.n_r;
        }
    }
    let components: Vec<ComponentDrift> = (0..dec.d_o)
        .map(|j| ComponentDrift {
            component: j,
            above: drift_stat(&above[j], |m, se| m > -zeta + 4.0 * se),
            below: drift_stat(&below[j], |m, se| m < zeta - 4.0 * se),
        })
        .collect();
    let total_events = components.iter().map(|c| c.above.events + c.below.events).sum();
    Ok(DriftReport {
        zeta,
        components,
        total_events,
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("u_max,ms_bound,fallback_rate,mean_qp_iters,paths,steps,seed\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.u_max, r.ms_bound, r.fallback_rate, r.mean_qp_iters, r.paths, r.steps, r.seed
        );
    }
    s
}

pub fn path_csv(res: &PathResult) -> String {
    let d = res.states.first().map_or(0, |v| v.len());
    let m = res.controls.first().map_or(0, |v| v.len());
    let mut s = String::from("t");
    for i in 1..=d {
        let _ = write!(s, ",x{i}");
    }
    for i in 1..=m {
        let _ = write!(s, ",u{i}");
    }
    for i in 1..=d {
        let _ = write!(s, ",xhat{i}");
    }
    s.push_str(",trP\n");
    for t in 0..res.states.len() {
        let _ = write!(s, "{t}");
        for v in res.states[t]
            .iter()
            .chain(res.controls[t].iter())
            .chain(res.estimates[t].iter())
        {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{}", res.trace_p[t]);
    }
    s
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    fs::write(path, sweep_csv(rows))?;
    Ok(())
}

pub fn write_path_csv(res: &PathResult, path: &Path) -> Result<()> {
    fs::write(path, path_csv(res))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(norms: &[f64]) -> PathResult {
        PathResult {
            path_index: 0,
            u_max: 1.0,
            zeta: 0.1,
            state_sq_norms: norms.to_vec(),
            states: vec![],
            estimates: vec![],
            controls: vec![],
            trace_p: vec![],
            solves: 0,
            fallback_count: 0,
            qp_iterations_total: 0,
            max_abs_u: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn constant_single_path() {
        assert_eq!(empirical_ms_bound(&[flat(&[2.5, 2.5, 2.5])]).unwrap(), 2.5);
    }

    #[test]
    fn max_over_time_of_mean() {
        let r = [flat(&[0.0, 2.0, 6.0]), flat(&[2.0, 2.0, 0.0])];
        assert_eq!(empirical_ms_bound(&r).unwrap(), 3.0);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(empirical_ms_bound(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn sweep_csv_header() {
        let row = SweepRow {
            u_max: 0.5,
            ms_bound: 3.25,
            fallback_rate: 0.0,
            mean_qp_iters: 10.0,
            paths: 1,
            steps: 9,
            seed: 4,
            max_abs_u: 0.5,
        };
        assert_eq!(
            sweep_csv(&[row]),
            "u_max,ms_bound,fallback_rate,mean_qp_iters,paths,steps,seed\n0.5,3.25,0,10,1,9,4\n"
        );
    }
}
