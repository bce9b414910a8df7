//! Small dense linear-algebra helpers shared by the control modules.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen, SVD};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used by rank tests.
pub const RANK_TOL: f64 = 1e-8;

/// Relative cutoff used when forming pseudo-inverses.
pub const PINV_TOL: f64 = 1e-10;

pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &Mat) -> Mat {
    let mut out = m.clone();
    symmetrize(&mut out);
    out
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn asymmetry(m: &Mat) -> f64 {
    max_abs(&(m - m.transpose()))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrized(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Symmetric square root of a PSD matrix; negative round-off eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrized(m));
    let mut out = Mat::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        if lam == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += lam * v * v.transpose();
    }
    out
}

pub fn singular_values<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64>,
{
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let mut out: Vec<f64> = sv.iter().copied().collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Numerical rank with cutoff `rel_tol * sigma_1`.
pub fn rank<T>(m: &DMatrix<T>, rel_tol: f64) -> usize
where
    T: ComplexField<RealField = f64>,
{
    let sv = singular_values(m);
    let Some(&s1) = sv.first() else { return 0 };
    if s1 == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * s1).count()
}

pub fn sigma_max(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn condition_number(m: &Mat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Moore-Penrose pseudo-inverse via SVD with cutoff `PINV_TOL * sigma_1`.
pub fn pinv(m: &Mat) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s1 = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut out = Mat::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_TOL * s1 && s > 0.0 {
            out += (1.0 / s) * v_t.row(k).transpose() * u.column(k).transpose();
        }
    }
    out
}

/// Orthonormal basis of the null space of `m` (columns).
pub fn null_space(m: &Mat, rel_tol: f64) -> Mat {
    let (r, c) = m.shape();
    if c == 0 {
        return Mat::zeros(0, 0);
    }
    // pad to at least square so that the SVD returns a full V
    let rows = r.max(c);
    let mut padded = Mat::zeros(rows, c);
    padded.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s1 = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cols: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s1 == 0.0 || s <= rel_tol * s1)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        Mat::zeros(c, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: &Mat, rel_tol: f64) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(r, 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("u requested");
    let s1 = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cols: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s1 > 0.0 && s > rel_tol * s1)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        Mat::zeros(r, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

pub fn mat_pow(a: &Mat, k: usize) -> Mat {
    let mut out = Mat::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = a * &out;
    }
    out
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Complex eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Vec<num_complex::Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

pub(crate) fn to_complex(m: &Mat) -> DMatrix<num_complex::Complex64> {
    m.map(|v| num_complex::Complex64::new(v, 0.0))
}

/// Solve a symmetric positive definite system, falling back to LU.
pub fn solve_spd(m: &Mat, rhs: &Vector) -> Option<Vector> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    m.clone().try_inverse()
}
