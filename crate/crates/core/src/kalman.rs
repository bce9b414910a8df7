//! Time-varying Kalman filter, its stationary limit, and the horizon error stack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::SystemSpec;

pub const STEADY_TOL: f64 = 1e-12;
pub const STEADY_MAX_ITER: usize = 100_000;

/// Filtered estimate `x_hat_{t|t}` and its error covariance `P_{t|t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: Vector,
    pub p: Mat,
    pub t: usize,
}

impl FilterState {
    /// Measurement residual against the filtered estimate, `y - C x_hat_{t|t}`.
    pub fn innovation(&self, spec: &SystemSpec, y: &Vector) -> Vector {
        y - &spec.c * &self.x_hat
    }
}

/// Kalman gain for the predicted covariance `m`.
fn gain(spec: &SystemSpec, m: &Mat) -> Result<Mat> {
    let s = &spec.c * m * spec.c.transpose() + &spec.sigma_v;
    let s_inv = linalg::inverse(&linalg::symmetrized(&s))
        .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
    Ok(m * spec.c.transpose() * s_inv)
}

/// Joseph-form update of the predicted covariance `m` with gain `k`.
fn joseph(spec: &SystemSpec, m: &Mat, k: &Mat) -> Mat {
    let d = spec.state_dim();
    let gamma = Mat::identity(d, d) - k * &spec.c;
    let mut p = &gamma * m * gamma.transpose() + k * &spec.sigma_v * k.transpose();
    linalg::symmetrize(&mut p);
    p
}

fn finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Conditions the prior `N(0, Sigma_x0)` on the first measurement.
pub fn init_filter(spec: &SystemSpec, y0: &Vector) -> Result<FilterState> {
    if !finite(y0) {
        return Err(Error::Numerical("non-finite initial measurement".into()));
    }
    let k0 = gain(spec, &spec.sigma_x0)?;
    let d = spec.state_dim();
    let mut p = (Mat::identity(d, d) - &k0 * &spec.c) * &spec.sigma_x0;
    linalg::symmetrize(&mut p);
    Ok(FilterState {
        x_hat: &k0 * y0,
        p,
        t: 0,
    })
}

/// One predict/correct cycle: applies `u` and conditions on `y_next`.
pub fn step(state: &FilterState, u: &Vector, y_next: &Vector, spec: &SystemSpec) -> Result<FilterState> {
    if !finite(u) || !finite(y_next) || !finite(&state.x_hat) {
        return Err(Error::Numerical("non-finite filter input".into()));
    }
    let mut m = &spec.a * &state.p * spec.a.transpose() + &spec.sigma_w;
    linalg::symmetrize(&mut m);
    let k = gain(spec, &m)?;
    let x_pred = &spec.a * &state.x_hat + &spec.b * u;
    let x_hat = &x_pred + &k * (y_next - &spec.c * &x_pred);
    let p = joseph(spec, &m, &k);
    Ok(FilterState {
        x_hat,
        p,
        t: state.t + 1,
    })
}

/// Stationary filter gains at the fixed point of the covariance recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyGains {
    pub k: Mat,
    /// `I - K C`.
    pub gamma: Mat,
    /// `Gamma A`.
    pub phi: Mat,
    pub p: Mat,
    pub iterations: usize,
}

pub fn steady_state(spec: &SystemSpec) -> Result<SteadyGains> {
    steady_state_from(spec, &spec.sigma_x0)
}

/// Iterates the covariance recursion from `p0` until the max-abs change drops below
/// `STEADY_TOL` relative to the largest entry of the covariance.
pub fn steady_state_from(spec: &SystemSpec, p0: &Mat) -> Result<SteadyGains> {
    let d = spec.state_dim();
    let mut p = p0.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=STEADY_MAX_ITER {
        let m = &spec.a * &p * spec.a.transpose() + &spec.sigma_w;
        let k = gain(spec, &m)?;
        let next = joseph(spec, &m, &k);
        residual = linalg::max_abs(&(&next - &p));
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual < STEADY_TOL * linalg::max_abs(&p) {
            let m = &spec.a * &p * spec.a.transpose() + &spec.sigma_w;
            let k = gain(spec, &m)?;
            let gamma = Mat::identity(d, d) - &k * &spec.c;
            let phi = &gamma * &spec.a;
            return Ok(SteadyGains {
                k,
                gamma,
                phi,
                p,
                iterations: it,
            });
        }
    }
    Err(Error::Divergence {
        iterations: STEADY_MAX_ITER,
        residual,
    })
}

/// Stationary maps taking `(e_t, w_{t:N}, v_{t:N+1})` to the error stack `e_{t:N+1} = F e + G w - H v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStack {
    pub f: Mat,
    pub g: Mat,
    pub h: Mat,
}

impl ErrorStack {
    pub fn apply(&self, e0: &Vector, w: &Vector, v: &Vector) -> Vector {
        &self.f * e0 + &self.g * w - &self.h * v
    }
}

pub fn error_stack(gains: &SteadyGains, spec: &SystemSpec, horizon: usize) -> ErrorStack {
    let d = spec.state_dim();
    let q = spec.output_dim();
    let n = horizon;
    let mut phi_pow = Vec::with_capacity(n + 1);
    let mut cur = Mat::identity(d, d);
    for _ in 0..=n {
        phi_pow.push(cur.clone());
        cur = &gains.phi * &cur;
    }
    let mut f = Mat::zeros((n + 1) * d, d);
    for (i, power) in phi_pow.iter().enumerate() {
        f.view_mut((i * d, 0), (d, d)).copy_from(power);
    }
    let mut g = Mat::zeros((n + 1) * d, n * d);
    let mut h = Mat::zeros((n + 1) * d, (n + 1) * q);
    for i in 1..=n {
        for j in 0..i {
            g.view_mut((i * d, j * d), (d, d))
                .copy_from(&(&phi_pow[i - 1 - j] * &gains.gamma));
        }
        for j in 1..=i {
            h.view_mut((i * d, j * q), (d, q))
                .copy_from(&(&phi_pow[i - j] * &gains.k));
        }
    }
    ErrorStack { f, g, h }
}
