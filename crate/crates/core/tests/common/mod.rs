//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ofspc::{Mat, QpProblem, SystemSpec, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scalar_spec(a: f64, c: f64, w: f64, v: f64, horizon: usize, u_max: f64) -> SystemSpec {
    let m = |x: f64| Mat::from_element(1, 1, x);
    SystemSpec::with_constant_weights(
        m(a),
        m(1.0),
        m(c),
        m(1.0),
        m(w),
        m(v),
        m(1.0),
        m(1.0),
        m(1.0),
        horizon,
        u_max,
    )
}

/// Root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisection(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by the Golub-Welsch eigenvalue method.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `int_a^b f` with an `n`-point Gauss-Legendre rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

/// `E[sat_c(Z)^2]` for `Z ~ N(0, s^2)`, splitting at the kink so each piece is smooth.
pub fn saturated_second_moment(s: f64, c: f64) -> f64 {
    let pdf = |z: f64| (-0.5 * (z / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let inner = integrate(|z| z * z * pdf(z), 0.0, c, 40);
    let mass = integrate(pdf, 0.0, c, 40);
    2.0 * (inner + c * c * (0.5 - mass))
}

/// Strictly convex QP with a planted minimizer: at most four rows active with multipliers of
/// magnitude at least 0.1, every other row slack by at least 0.05.
pub fn planted_qp(rng: &mut ChaCha8Rng) -> (QpProblem, Vector) {
    let n = rng.random_range(2..=12);
    let c = rng.random_range(1..=20);
    let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = m.transpose() * &m + Mat::identity(n, n) * 0.1;
    let a = Mat::from_fn(c, n, |_, _| {
        if rng.random_bool(0.7) {
            rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    let x_star = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let ax = &a * &x_star;
    let k = rng.random_range(0..=c.min(n).min(4));
    let mut rows: Vec<usize> = (0..c).collect();
    for i in 0..k {
        let j = rng.random_range(i..c);
        rows.swap(i, j);
    }
    let mut y = Vector::zeros(c);
    let mut l = Vector::zeros(c);
    let mut u = Vector::zeros(c);
    for i in 0..c {
        let active = rows[..k].contains(&i);
        let gap = |rng: &mut ChaCha8Rng| rng.random_range(0.05..1.5);
        if active && rng.random_bool(0.15) {
            l[i] = ax[i];
            u[i] = ax[i];
            y[i] = rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        } else if active && rng.random_bool(0.5) {
            l[i] = ax[i];
            u[i] = if rng.random_bool(0.3) {
                f64::INFINITY
            } else {
                ax[i] + gap(rng)
            };
            y[i] = -rng.random_range(0.1..2.0);
        } else if active {
            u[i] = ax[i];
            l[i] = if rng.random_bool(0.3) {
                f64::NEG_INFINITY
            } else {
                ax[i] - gap(rng)
            };
            y[i] = rng.random_range(0.1..2.0);
        } else {
            l[i] = if rng.random_bool(0.2) {
                f64::NEG_INFINITY
            } else {
                ax[i] - gap(rng)
            };
            u[i] = if rng.random_bool(0.2) {
                f64::INFINITY
            } else {
                ax[i] + gap(rng)
            };
        }
    }
    // stationarity P x* + q + A' y = 0
    let q = -(&p * &x_star) - a.transpose() * &y;
    (QpProblem { p, q, a, l, u }, x_star)
}

pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    planted_qp(rng).0
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Lower,
    Upper,
}

fn kkt_for(prob: &QpProblem, set: &[(usize, Side)]) -> Option<(Vector, Vector)> {
    let n = prob.q.len();
    let k = set.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&prob.p);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&prob.q));
    for (r, &(i, side)) in set.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = prob.a[(i, j)];
            kkt[(j, n + r)] = prob.a[(i, j)];
        }
        rhs[n + r] = if side == Side::Lower { prob.l[i] } else { prob.u[i] };
    }
    let sol = kkt.lu().solve(&rhs)?;
    let x = sol.rows(0, n).into_owned();
    let mut y = Vector::zeros(prob.l.len());
    for (r, &(i, _)) in set.iter().enumerate() {
        y[i] = sol[n + r];
    }
    Some((x, y))
}

fn is_optimal(prob: &QpProblem, x: &Vector, y: &Vector, set: &[(usize, Side)]) -> bool {
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return false;
    }
    let stationarity = &prob.p * x + &prob.q + prob.a.transpose() * y;
    if stationarity.amax() > 1e-8 * (1.0 + prob.q.amax()) {
        return false;
    }
    let ax = &prob.a * x;
    let tol = 1e-9 * (1.0 + ax.amax());
    if (0..ax.len()).any(|i| ax[i] < prob.l[i] - tol || ax[i] > prob.u[i] + tol) {
        return false;
    }
    set.iter().all(|&(i, side)| match side {
        Side::Lower => y[i] <= 1e-12,
        Side::Upper => y[i] >= -1e-12,
    })
}

fn search(prob: &QpProblem, size: usize, start: usize, set: &mut Vec<(usize, Side)>) -> Option<(Vector, Vector)> {
    if set.len() == size {
        let (x, y) = kkt_for(prob, set)?;
        return is_optimal(prob, &x, &y, set).then_some((x, y));
    }
    for i in start..prob.l.len() {
        for side in [Side::Lower, Side::Upper] {
            let bound = if side == Side::Lower { prob.l[i] } else { prob.u[i] };
            if bound.is_infinite() {
                continue;
            }
            set.push((i, side));
            if let Some(found) = search(prob, size, i + 1, set) {
                return Some(found);
            }
            set.pop();
        }
    }
    None
}

/// Exhaustive active-set enumeration in order of increasing size; for a strictly convex QP the
/// first KKT point that is primal and dual feasible is the unique minimizer.
pub fn active_set_oracle(prob: &QpProblem) -> Option<(Vector, Vector)> {
    let cap = prob.q.len().min(prob.l.len());
    (0..=cap).find_map(|size| search(prob, size, 0, &mut Vec::new()))
}
