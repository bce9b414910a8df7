//! Real similarity transform splitting a Lyapunov-stable `A` into an orthogonal block and a
//! Schur-stable block, plus the reachability data of the orthogonal block.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector, RANK_TOL};
use crate::model::{reachability_matrix, SystemSpec, UNIT_CIRCLE_TOL};

const GROUP_TOL: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Change of basis: `T A T^{-1} = blockdiag(A_o, A_s)`.
    pub t: Mat,
    pub t_inv: Mat,
    pub a_o: Mat,
    pub a_s: Mat,
    pub b_o: Mat,
    pub b_s: Mat,
    pub d_o: usize,
    pub d_s: usize,
    /// Reachability index of `(A_o, B_o)`; zero when the orthogonal part is empty.
    pub kappa: usize,
    pub r_kappa: Mat,
    pub r_kappa_pinv: Mat,
    /// Largest admissible drift magnitude at the plant's `u_max`; `None` when `d_o = 0`.
    pub zeta_max: Option<f64>,
    pub condition: f64,
}

impl Decomposition {
    /// Orthogonal coordinates of a state vector.
    pub fn orthogonal_part(&self, x: &Vector) -> Vector {
        (self.t.rows(0, self.d_o) * x).into_owned()
    }

    pub fn stable_part(&self, x: &Vector) -> Vector {
        (self.t.rows(self.d_o, self.d_s) * x).into_owned()
    }

    /// `sigma_1(R_kappa^+)`.
    pub fn pinv_gain(&self) -> f64 {
        linalg::sigma_max(&self.r_kappa_pinv)
    }

    /// `u_max / (sqrt(d_o) sigma_1(R_kappa^+))`.
    pub fn zeta_bound(&self, u_max: f64) -> Result<f64> {
        if self.d_o == 0 {
            return Err(Error::NotApplicable("orthogonal part is empty".into()));
        }
        Ok(u_max / ((self.d_o as f64).sqrt() * self.pinv_gain()))
    }
}

enum UnitGroup {
    Real { lambda: f64, count: usize },
    Pair { theta: f64, count: usize },
}

fn unit_groups(a: &Mat) -> Result<(Vec<UnitGroup>, usize)> {
    let eigs = linalg::eigenvalues(a);
    let mut reals: Vec<(f64, usize)> = Vec::new();
    let mut pairs: Vec<(f64, usize)> = Vec::new();
    let mut n_unit = 0;
    for lam in &eigs {
        let r = lam.norm();
        if r > 1.0 + UNIT_CIRCLE_TOL {
            return Err(Error::Decomposition(format!(
                "eigenvalue of modulus {r} outside the unit disk"
            )));
        }
        if r < 1.0 - UNIT_CIRCLE_TOL {
            continue;
        }
        n_unit += 1;
        if lam.im.abs() <= GROUP_TOL {
            let l = if lam.re > 0.0 { 1.0 } else { -1.0 };
            match reals.iter_mut().find(|(v, _)| *v == l) {
                Some(e) => e.1 += 1,
                None => reals.push((l, 1)),
            }
        } else if lam.im > 0.0 {
            let theta = lam.im.atan2(lam.re);
            match pairs.iter_mut().find(|(v, _)| (*v - theta).abs() <= GROUP_TOL) {
                Some(e) => e.1 += 1,
                None => pairs.push((theta, 1)),
            }
        }
    }
    reals.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut groups: Vec<UnitGroup> = reals
        .into_iter()
        .map(|(lambda, count)| UnitGroup::Real { lambda, count })
        .collect();
    groups.extend(pairs.into_iter().map(|(theta, count)| UnitGroup::Pair { theta, count }));
    Ok((groups, n_unit))
}

fn group_polynomial(a: &Mat, g: &UnitGroup) -> Mat {
    let d = a.nrows();
    let eye = Mat::identity(d, d);
    match *g {
        UnitGroup::Real { lambda, .. } => a - lambda * &eye,
        UnitGroup::Pair { theta, .. } => a * a - 2.0 * theta.cos() * a + eye,
    }
}

fn sign_normalize(mut v: Vector) -> Vector {
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    let lead = v
        .iter()
        .copied()
        .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() + 1e-12 { x } else { acc });
    if lead < 0.0 {
        v = -v;
    }
    v
}

/// Picks the coordinate direction whose projection onto `span(basis)`, after removing the
/// already-chosen directions `taken`, is largest. Keeps bases axis-aligned where possible.
fn best_direction(basis: &Mat, taken: &[Vector]) -> Vector {
    let d = basis.nrows();
    let proj_sub = basis * basis.transpose();
    let taken_q = if taken.is_empty() {
        Mat::zeros(d, 0)
    } else {
        linalg::range_basis(&Mat::from_columns(taken), RANK_TOL)
    };
    let mut best = Vector::zeros(d);
    let mut best_norm = -1.0;
    for k in 0..d {
        let mut v = proj_sub.column(k).into_owned();
        if taken_q.ncols() > 0 {
            v -= &taken_q * (taken_q.transpose() * &v);
        }
        let n = v.norm();
        if n > best_norm + 1e-12 {
            best_norm = n;
            best = v;
        }
    }
    sign_normalize(best)
}

pub fn decompose(spec: &SystemSpec) -> Result<Decomposition> {
    let a = &spec.a;
    let d = a.nrows();
    let (groups, n_unit) = unit_groups(a)?;

    let mut orth_cols: Vec<Vector> = Vec::new();
    for g in &groups {
        let poly = group_polynomial(a, g);
        let kernel = linalg::null_space(&poly, RANK_TOL);
        match *g {
            UnitGroup::Real { lambda, count } => {
                if kernel.ncols() != count {
                    return Err(Error::Decomposition(format!(
                        "eigenvalue {lambda} is not semisimple (kernel {} < multiplicity {count})",
                        kernel.ncols()
                    )));
                }
                let mut chosen = Vec::new();
                for _ in 0..count {
                    let v = best_direction(&kernel, &chosen);
                    chosen.push(v);
                }
                orth_cols.extend(chosen);
            }
            UnitGroup::Pair { theta, count } => {
                if kernel.ncols() != 2 * count {
                    return Err(Error::Decomposition(format!(
                        "eigenvalue pair at angle {theta} is not semisimple (kernel {} < {})",
                        kernel.ncols(),
                        2 * count
                    )));
                }
                let (s, c) = theta.sin_cos();
                let mut chosen: Vec<Vector> = Vec::new();
                for _ in 0..count {
                    let v1 = best_direction(&kernel, &chosen);
                    // in the basis [v1, v2] the restriction of A is a rotation by theta
                    let v2 = (a * &v1 - c * &v1) / s;
                    chosen.push(v1);
                    chosen.push(v2);
                }
                orth_cols.extend(chosen);
            }
        }
    }
    let d_o = orth_cols.len();
    if d_o != n_unit {
        return Err(Error::Decomposition(format!(
            "found {d_o} unit-circle directions for {n_unit} eigenvalues"
        )));
    }
    let d_s = d - d_o;

    let mut stab_cols: Vec<Vector> = Vec::new();
    if d_s > 0 {
        let mut poly = Mat::identity(d, d);
        for g in &groups {
            poly = group_polynomial(a, g) * poly;
        }
        let range = linalg::range_basis(&poly, RANK_TOL);
        if range.ncols() != d_s {
            return Err(Error::Decomposition(format!(
                "stable subspace has dimension {} instead of {d_s}",
                range.ncols()
            )));
        }
        for _ in 0..d_s {
            let v = best_direction(&range, &stab_cols);
            stab_cols.push(v);
        }
    }

    let mut cols = orth_cols;
    cols.extend(stab_cols);
    let t_inv = Mat::from_columns(&cols);
    let condition = linalg::condition_number(&t_inv);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning(condition));
    }
    let t = linalg::inverse(&t_inv).ok_or(Error::Conditioning(f64::INFINITY))?;
    let a_t = &t * a * &t_inv;
    let a_o = a_t.view((0, 0), (d_o, d_o)).into_owned();
    let a_s = a_t.view((d_o, d_o), (d_s, d_s)).into_owned();
    let b_t = &t * &spec.b;
    let b_o = b_t.rows(0, d_o).into_owned();
    let b_s = b_t.rows(d_o, d_s).into_owned();

    if d_o > 0 {
        let orth_err = linalg::max_abs(&(a_o.transpose() * &a_o - Mat::identity(d_o, d_o)));
        if orth_err > 1e-8 {
            return Err(Error::Decomposition(format!(
                "orthogonal block deviates by {orth_err:e}"
            )));
        }
    }
    if d_s > 0 {
        let rho = linalg::eigenvalues(&a_s).iter().map(|l| l.norm()).fold(0.0, f64::max);
        if rho > 1.0 - UNIT_CIRCLE_TOL {
            return Err(Error::Decomposition(format!("stable block has spectral radius {rho}")));
        }
    }

    let kappa = reachability_index(&a_o, &b_o)?;
    let r_kappa = reachability_matrix(&a_o, &b_o, kappa);
    let r_kappa_pinv = linalg::pinv(&r_kappa);
    let mut dec = Decomposition {
        t,
        t_inv,
        a_o,
        a_s,
        b_o,
        b_s,
        d_o,
        d_s,
        kappa,
        r_kappa,
        r_kappa_pinv,
        zeta_max: None,
        condition,
    };
    dec.zeta_max = dec.zeta_bound(spec.u_max).ok();
    Ok(dec)
}

/// Smallest `k` with `rank R_k(A_o, B_o) = d_o`.
pub fn reachability_index(a_o: &Mat, b_o: &Mat) -> Result<usize> {
    let d_o = a_o.nrows();
    if d_o == 0 {
        return Ok(0);
    }
    let mut last_rank = 0;
    for k in 1..=d_o {
        last_rank = linalg::rank(&reachability_matrix(a_o, b_o, k), RANK_TOL);
        if last_rank == d_o {
            return Ok(k);
        }
    }
    Err(Error::Unreachable {
        rank: last_rank,
        dim: d_o,
    })
}

/// Rotation by `theta`.
pub fn rotation(theta: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_split() {
        let dec = decompose(&SystemSpec::benchmark(1.0)).unwrap();
        assert_eq!((dec.d_o, dec.d_s, dec.kappa), (3, 1, 3));
        let mut expect = Mat::zeros(3, 3);
        expect[(0, 0)] = 1.0;
        expect
            .view_mut((1, 1), (2, 2))
            .copy_from(&rotation(std::f64::consts::FRAC_PI_2));
        assert!(linalg::max_abs(&(&dec.a_o - expect)) < 1e-12);
        assert!((dec.a_s[(0, 0)] - 0.9).abs() < 1e-12);
        assert!(linalg::max_abs(&(&dec.b_o - Mat::from_column_slice(3, 1, &[1.0, 0.0, 1.0]))) < 1e-12);
        assert!(dec.b_s[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn schur_stable_has_empty_orthogonal_part() {
        let mut spec = SystemSpec::benchmark(1.0);
        spec.a = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -0.3, 0.2, 0.9]));
        let dec = decompose(&spec).unwrap();
        assert_eq!((dec.d_o, dec.d_s, dec.kappa), (0, 4, 0));
        assert!(dec.zeta_max.is_none());
        assert!(matches!(dec.zeta_bound(1.0), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn rotation_has_empty_schur_part() {
        let mut spec = SystemSpec::benchmark(1.0);
        spec.a = linalg::block_diag(&[rotation(0.7), rotation(2.1)]);
        let dec = decompose(&spec).unwrap();
        assert_eq!((dec.d_o, dec.d_s), (4, 0));
        let ev_a = linalg::eigenvalues(&spec.a);
        let ev_o = linalg::eigenvalues(&dec.a_o);
        for l in ev_a {
            assert!(ev_o.iter().any(|o| (o - l).norm() < 1e-9));
        }
    }

    #[test]
    fn scalar_index() {
        let one = Mat::identity(1, 1);
        assert_eq!(reachability_index(&one, &one).unwrap(), 1);
    }

    #[test]
    fn unreachable_orthogonal_part() {
        let a = Mat::identity(2, 2);
        let b = Mat::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(
            reachability_index(&a, &b),
            Err(Error::Unreachable { rank: 1, dim: 2 })
        ));
    }

    #[test]
    fn zeta_bound_unit_and_linear() {
        let one = Mat::identity(1, 1);
        let mut spec = SystemSpec::benchmark(1.0);
        spec.a = one.clone();
        spec.b = one.clone();
        spec.c = one.clone();
        let dec = decompose(&spec).unwrap();
        assert!((dec.zeta_bound(1.0).unwrap() - 1.0).abs() < 1e-14);
        let full = decompose(&SystemSpec::benchmark(1.0)).unwrap();
        let z1 = full.zeta_bound(1.0).unwrap();
        assert!((full.zeta_bound(2.0).unwrap() - 2.0 * z1).abs() < 1e-14);
    }

    #[test]
    fn jordan_block_rejected() {
        let mut spec = SystemSpec::benchmark(1.0);
        spec.a = Mat::identity(4, 4);
        spec.a[(0, 1)] = 1.0;
        assert!(decompose(&spec).is_err());
    }
}
