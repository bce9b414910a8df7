//! Plant description, standing-assumption checks, and stacked horizon matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, RANK_TOL};

/// Eigenvalues whose modulus lies within this band of one are treated as on the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-8;

/// Eigenvalues closer than this are counted as one repeated eigenvalue.
const CLUSTER_TOL: f64 = 1e-6;

/// Discrete-time LTI plant `x+ = A x + B u + w`, `y = C x + v` with quadratic stage costs.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub sigma_x0: Mat,
    pub sigma_w: Mat,
    pub sigma_v: Mat,
    /// Stage weights `Q_0 .. Q_{N-1}`.
    pub q_list: Vec<Mat>,
    pub q_terminal: Mat,
    /// Stage weights `R_0 .. R_{N-1}`.
    pub r_list: Vec<Mat>,
    pub horizon: usize,
    pub u_max: f64,
}

impl SystemSpec {
    /// Builds a spec with stage weights broadcast over the horizon.
    #[allow(clippy::too_many_arguments)]
    pub fn with_constant_weights(
        a: Mat,
        b: Mat,
        c: Mat,
        sigma_x0: Mat,
        sigma_w: Mat,
        sigma_v: Mat,
        q: Mat,
        q_terminal: Mat,
        r: Mat,
        horizon: usize,
        u_max: f64,
    ) -> Self {
        SystemSpec {
            a,
            b,
            c,
            sigma_x0,
            sigma_w,
            sigma_v,
            q_list: vec![q; horizon],
            q_terminal,
            r_list: vec![r; horizon],
            horizon,
            u_max,
        }
    }

    /// The four-state benchmark plant: a stable mode at 0.9, an integrator and a quarter-turn rotation.
    pub fn benchmark(u_max: f64) -> Self {
        let a = Mat::from_row_slice(
            4,
            4,
            &[
                0.9, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, -1.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        );
        let b = Mat::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 1.0]);
        let eye = Mat::identity(4, 4);
        SystemSpec::with_constant_weights(
            a,
            b,
            eye.clone(),
            eye.clone(),
            eye.clone(),
            eye.clone(),
            eye.clone(),
            eye,
            Mat::identity(1, 1),
            5,
            u_max,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_u_max(&self, u_max: f64) -> Self {
        SystemSpec { u_max, ..self.clone() }
    }

    /// Checks that every matrix has a shape consistent with `A`, `B`, `C` and the horizon.
    pub fn check_dimensions(&self) -> Result<()> {
        let d = self.a.nrows();
        if self.a.ncols() != d {
            return Err(Error::dim("A", "square", format!("{}x{}", d, self.a.ncols())));
        }
        let m = self.b.ncols();
        let q = self.c.nrows();
        let expect = |name: &str, mat: &Mat, r: usize, c: usize| -> Result<()> {
            if mat.shape() != (r, c) {
                return Err(Error::dim(
                    name,
                    format!("{r}x{c}"),
                    format!("{}x{}", mat.nrows(), mat.ncols()),
                ));
            }
            Ok(())
        };
        expect("B", &self.b, d, m)?;
        expect("C", &self.c, q, d)?;
        expect("Sigma_x0", &self.sigma_x0, d, d)?;
        expect("Sigma_w", &self.sigma_w, d, d)?;
        expect("Sigma_v", &self.sigma_v, q, q)?;
        expect("Q_N", &self.q_terminal, d, d)?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon N must be at least 1".into()));
        }
        if m == 0 || q == 0 || d == 0 {
            return Err(Error::Config(
                "state, input and output dimensions must be positive".into(),
            ));
        }
        if self.q_list.len() != self.horizon {
            return Err(Error::dim(
                "Q",
                format!("{} stage matrices", self.horizon),
                self.q_list.len(),
            ));
        }
        if self.r_list.len() != self.horizon {
            return Err(Error::dim(
                "R",
                format!("{} stage matrices", self.horizon),
                self.r_list.len(),
            ));
        }
        for qk in &self.q_list {
            expect("Q", qk, d, d)?;
        }
        for rk in &self.r_list {
            expect("R", rk, m, m)?;
        }
        if !(self.u_max > 0.0) {
            return Err(Error::Config(format!("u_max must be positive, got {}", self.u_max)));
        }
        Ok(())
    }

    /// Runs every standing-assumption check.
    pub fn validate(&self) -> Result<ValidationReport> {
        validate(self)
    }

    /// Fails unless every standing-assumption check passes.
    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = self.validate()?;
        if report.all_passed() {
            Ok(report)
        } else {
            Err(Error::Assumption(report.failure_names().join(", ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Signed distance from the failure boundary; negative when the check fails.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failure_names(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn get(&self, name_prefix: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name.starts_with(name_prefix))
    }

    fn push(&mut self, name: &str, passed: bool, margin: f64, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            margin,
            detail,
        });
    }
}

/// PBH test: `[A - lambda I, M]` (or the stacked transpose when `stack_rows`) has full rank
/// at every eigenvalue selected by `filter`. Returns the smallest relative singular gap.
fn pbh(a: &Mat, m: &Mat, eigs: &[Complex64], stack_rows: bool, filter: impl Fn(&Complex64) -> bool) -> (bool, f64) {
    let d = a.nrows();
    let ac = linalg::to_complex(a);
    let mc = linalg::to_complex(m);
    let mut ok = true;
    let mut margin = f64::INFINITY;
    for lam in eigs.iter().filter(|l| filter(l)) {
        let shifted = &ac - nalgebra::DMatrix::<Complex64>::identity(d, d) * *lam;
        let test = if stack_rows {
            let mut t = nalgebra::DMatrix::<Complex64>::zeros(d + mc.nrows(), d);
            t.view_mut((0, 0), (d, d)).copy_from(&shifted);
            t.view_mut((d, 0), mc.shape()).copy_from(&mc);
            t
        } else {
            let mut t = nalgebra::DMatrix::<Complex64>::zeros(d, d + mc.ncols());
            t.view_mut((0, 0), (d, d)).copy_from(&shifted);
            t.view_mut((0, d), mc.shape()).copy_from(&mc);
            t
        };
        let sv = linalg::singular_values(&test);
        let s1 = sv.first().copied().unwrap_or(0.0);
        let sd = sv.get(d - 1).copied().unwrap_or(0.0);
        let rel = if s1 > 0.0 { sd / s1 } else { 0.0 };
        margin = margin.min(rel - RANK_TOL);
        if linalg::rank(&test, RANK_TOL) < d {
            ok = false;
        }
    }
    if margin == f64::INFINITY {
        margin = 1.0;
    }
    (ok, margin)
}

/// Lyapunov stability: spectrum in the closed unit disk, unit-circle eigenvalues semisimple.
pub fn lyapunov_stability(a: &Mat) -> (bool, f64, String) {
    let d = a.nrows();
    let eigs = linalg::eigenvalues(a);
    let radius = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if radius > 1.0 + UNIT_CIRCLE_TOL {
        return (false, 1.0 - radius, format!("spectral radius {radius:.6} exceeds one"));
    }
    let ac = linalg::to_complex(a);
    let mut margin = 1.0 - radius + UNIT_CIRCLE_TOL;
    for lam in eigs.iter().filter(|l| (l.norm() - 1.0).abs() <= UNIT_CIRCLE_TOL) {
        let algebraic = eigs.iter().filter(|o| (*o - lam).norm() <= CLUSTER_TOL).count();
        let shifted = &ac - nalgebra::DMatrix::<Complex64>::identity(d, d) * *lam;
        let geometric = d - linalg::rank(&shifted, RANK_TOL);
        if geometric < algebraic {
            return (
                false,
                geometric as f64 - algebraic as f64,
                format!(
                    "unit-circle eigenvalue {:.6}{:+.6}i has geometric multiplicity {geometric} < algebraic {algebraic}",
                    lam.re, lam.im
                ),
            );
        }
        margin = margin.max(0.0);
    }
    (true, margin, format!("spectral radius {radius:.6}"))
}

fn definiteness_check(report: &mut ValidationReport, name: &str, m: &Mat, strict: bool) {
    let asym = linalg::asymmetry(m);
    let scale = 1.0 + linalg::max_abs(m);
    let min_eig = linalg::min_sym_eigenvalue(m);
    let sym_ok = asym <= 1e-9 * scale;
    let eig_ok = if strict {
        min_eig > 1e-12 * scale
    } else {
        min_eig >= -1e-9 * scale
    };
    report.push(
        name,
        sym_ok && eig_ok,
        if sym_ok { min_eig } else { -asym },
        format!("min eigenvalue {min_eig:.3e}, asymmetry {asym:.1e}"),
    );
}

/// Evaluates the standing assumptions on `spec`.
///
/// The report holds one entry per assumption: stabilizability and observability (PBH),
/// Gaussian noise covariances definite, Lyapunov stability of `A`, and controllability
/// of `(A, Sigma_w^{1/2})`, plus PSD checks on the cost weights.
pub fn validate(spec: &SystemSpec) -> Result<ValidationReport> {
    spec.check_dimensions()?;
    let mut report = ValidationReport::default();
    let eigs = linalg::eigenvalues(&spec.a);

    let (ok, margin) = pbh(&spec.a, &spec.b, &eigs, false, |l| l.norm() >= 1.0 - UNIT_CIRCLE_TOL);
    report.push(
        "A1 (A,B) stabilizable",
        ok,
        margin,
        "PBH rank at non-stable eigenvalues".into(),
    );
    let (ok, margin) = pbh(&spec.a, &spec.c, &eigs, true, |_| true);
    report.push("A1 (A,C) observable", ok, margin, "PBH rank at every eigenvalue".into());

    definiteness_check(&mut report, "A2 Sigma_x0 PSD", &spec.sigma_x0, false);
    definiteness_check(&mut report, "A2 Sigma_w PD", &spec.sigma_w, true);
    definiteness_check(&mut report, "A2 Sigma_v PD", &spec.sigma_v, true);

    let (ok, margin, detail) = lyapunov_stability(&spec.a);
    report.push("A3 A Lyapunov stable", ok, margin, detail);

    let w_half = linalg::psd_sqrt(&spec.sigma_w);
    let (ok, margin) = pbh(&spec.a, &w_half, &eigs, false, |_| true);
    report.push(
        "A4 (A,Sigma_w^1/2) controllable",
        ok,
        margin,
        "PBH rank at every eigenvalue".into(),
    );

    for (k, q) in spec.q_list.iter().enumerate() {
        definiteness_check(&mut report, &format!("cost Q_{k} PSD"), q, false);
    }
    definiteness_check(&mut report, "cost Q_N PSD", &spec.q_terminal, false);
    for (k, r) in spec.r_list.iter().enumerate() {
        definiteness_check(&mut report, &format!("cost R_{k} PSD"), r, false);
    }
    Ok(report)
}

/// `[A^{k-1} B, A^{k-2} B, ..., B]`.
pub fn reachability_matrix(a: &Mat, b: &Mat, k: usize) -> Mat {
    let (n, p) = b.shape();
    let mut out = Mat::zeros(n, k * p);
    let mut power = b.clone();
    for j in (0..k).rev() {
        out.view_mut((0, j * p), (n, p)).copy_from(&power);
        power = a * &power;
    }
    out
}

/// Stacked prediction matrices over one horizon.
///
/// With `x_{t:N+1}` holding the `N+1` blocks `x_t .. x_{t+N}` and `u_{t:N}`, `w_{t:N}` holding
/// `N` blocks: `x = cal_a x_t + cal_b u + cal_d w` and `y = cal_c x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrices {
    pub cal_a: Mat,
    pub cal_b: Mat,
    pub cal_c: Mat,
    pub cal_d: Mat,
    pub cal_q: Mat,
    pub cal_r: Mat,
    /// `cal_b' cal_q cal_b + cal_r`.
    pub alpha: Mat,
}

fn lower_toeplitz(a: &Mat, g: &Mat, horizon: usize) -> Mat {
    let d = a.nrows();
    let p = g.ncols();
    let mut out = Mat::zeros((horizon + 1) * d, horizon * p);
    // powers[k] = A^k G
    let mut powers = Vec::with_capacity(horizon);
    let mut cur = g.clone();
    for _ in 0..horizon {
        powers.push(cur.clone());
        cur = a * &cur;
    }
    for i in 1..=horizon {
        for j in 0..i {
            out.view_mut((i * d, j * p), (d, p)).copy_from(&powers[i - 1 - j]);
        }
    }
    out
}

pub fn build_stacked(spec: &SystemSpec) -> StackedMatrices {
    let n = spec.horizon;
    let d = spec.state_dim();
    let mut cal_a = Mat::zeros((n + 1) * d, d);
    let mut power = Mat::identity(d, d);
    for i in 0..=n {
        cal_a.view_mut((i * d, 0), (d, d)).copy_from(&power);
        power = &spec.a * &power;
    }
    let cal_b = lower_toeplitz(&spec.a, &spec.b, n);
    let cal_d = lower_toeplitz(&spec.a, &Mat::identity(d, d), n);
    let cal_c = linalg::block_diag(&vec![spec.c.clone(); n + 1]);
    let mut q_blocks = spec.q_list.clone();
    q_blocks.push(spec.q_terminal.clone());
    let cal_q = linalg::block_diag(&q_blocks);
    let cal_r = linalg::block_diag(&spec.r_list);
    let mut alpha = cal_b.transpose() * &cal_q * &cal_b + &cal_r;
    linalg::symmetrize(&mut alpha);
    StackedMatrices {
        cal_a,
        cal_b,
        cal_c,
        cal_d,
        cal_q,
        cal_r,
        alpha,
    }
}
