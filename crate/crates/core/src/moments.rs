//! Offline Monte-Carlo moments of saturated future innovations, plus the cache file that stores them.
//!
//! Every batch of samples draws from its own ChaCha stream, and batch partial sums are
//! reduced in batch order, so results do not depend on how many workers run.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::kalman::{ErrorStack, SteadyGains};
use crate::linalg::{self, Mat, Vector};
use crate::model::SystemSpec;
use crate::policy::{PsiKind, PsiSpec};

pub const DEFAULT_SAMPLES: usize = 100_000;
const BATCH: usize = 1024;
const MAGIC: &[u8] = b"OFSPC-MOM v1";
const BETA_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    /// `E[psi' psi'^T]`, `qN x qN`.
    pub sigma_psi: Mat,
    /// `E[psi' w^T]`, `qN x dN`.
    pub sigma_psi_w: Mat,
    /// `E[psi' e_t^T]`, `qN x d`.
    pub sigma_e_psi: Mat,
    pub psi_mean: Vector,
    pub stderr_psi: Mat,
    pub stderr_psi_w: Mat,
    pub stderr_e_psi: Mat,
    pub stderr_psi_mean: Vector,
    pub beta: Option<BetaEstimate>,
    pub samples: usize,
    pub seed: u64,
    pub spec_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    /// Mean of the full-state norm.
    pub beta_hat: f64,
    pub stderr: f64,
    /// Mean norm of the orthogonal-coordinate part.
    pub beta_orthogonal: f64,
}

impl MomentSet {
    pub fn beta_hat(&self) -> Option<f64> {
        self.beta.map(|b| b.beta_hat)
    }

    /// Largest entry of the three matrix standard-error tables.
    pub fn max_stderr(&self) -> f64 {
        linalg::max_abs(&self.stderr_psi)
            .max(linalg::max_abs(&self.stderr_psi_w))
            .max(linalg::max_abs(&self.stderr_e_psi))
    }

    pub fn check_digest(&self, expected: &str) -> Result<()> {
        if self.spec_digest != expected {
            return Err(Error::StaleCache {
                path: Default::default(),
                expected: expected.to_string(),
                found: self.spec_digest.clone(),
            });
        }
        Ok(())
    }
}

fn hash_matrix(h: &mut Sha256, tag: &str, m: &Mat) {
    h.update(tag.as_bytes());
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            h.update(m[(i, j)].to_le_bytes());
        }
    }
}

/// Content hash of everything the moments depend on. `u_max` is deliberately excluded.
pub fn spec_digest(spec: &SystemSpec, psi: &PsiSpec, gains: &SteadyGains) -> String {
    let mut h = Sha256::new();
    for (tag, m) in [
        ("A", &spec.a),
        ("B", &spec.b),
        ("C", &spec.c),
        ("Sigma_x0", &spec.sigma_x0),
        ("Sigma_w", &spec.sigma_w),
        ("Sigma_v", &spec.sigma_v),
        ("Q_N", &spec.q_terminal),
    ] {
        hash_matrix(&mut h, tag, m);
    }
    for q in &spec.q_list {
        hash_matrix(&mut h, "Q", q);
    }
    for r in &spec.r_list {
        hash_matrix(&mut h, "R", r);
    }
    h.update(b"N");
    h.update((spec.horizon as u64).to_le_bytes());
    h.update(match psi.kind {
        PsiKind::Sigmoid => b"sigmoid".as_slice(),
        PsiKind::Saturation => b"saturation".as_slice(),
    });
    h.update(psi.psi_max.to_le_bytes());
    hash_matrix(&mut h, "K", &gains.k);
    hash_matrix(&mut h, "P", &gains.p);
    hex::encode(h.finalize())
}

fn batch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Draws a stack of `blocks` independent `N(0, S)` vectors where `sqrt_s = S^{1/2}`.
fn gaussian_stack(rng: &mut ChaCha8Rng, sqrt_s: &Mat, blocks: usize) -> Vector {
    let k = sqrt_s.nrows();
    let mut out = Vector::zeros(k * blocks);
    for b in 0..blocks {
        let z = standard_normal(rng, k);
        out.rows_mut(b * k, k).copy_from(&(sqrt_s * z));
    }
    out
}

#[derive(Clone)]
struct Accum {
    n: usize,
    s_psi: Mat,
    s2_psi: Mat,
    s_pw: Mat,
    s2_pw: Mat,
    s_ep: Mat,
    s2_ep: Mat,
    s_mean: Vector,
    s2_mean: Vector,
}

impl Accum {
    fn new(qn: usize, dn: usize, d: usize) -> Self {
        Accum {
            n: 0,
            s_psi: Mat::zeros(qn, qn),
            s2_psi: Mat::zeros(qn, qn),
            s_pw: Mat::zeros(qn, dn),
            s2_pw: Mat::zeros(qn, dn),
            s_ep: Mat::zeros(qn, d),
            s2_ep: Mat::zeros(qn, d),
            s_mean: Vector::zeros(qn),
            s2_mean: Vector::zeros(qn),
        }
    }

    fn add_outer(s: &mut Mat, s2: &mut Mat, a: &Vector, b: &Vector) {
        for j in 0..b.len() {
            for i in 0..a.len() {
                let v = a[i] * b[j];
                s[(i, j)] += v;
                s2[(i, j)] += v * v;
            }
        }
    }

    fn push(&mut self, psi: &Vector, w: &Vector, e: &Vector) {
        self.n += 1;
        Self::add_outer(&mut self.s_psi, &mut self.s2_psi, psi, psi);
        Self::add_outer(&mut self.s_pw, &mut self.s2_pw, psi, w);
        Self::add_outer(&mut self.s_ep, &mut self.s2_ep, psi, e);
        self.s_mean += psi;
        self.s2_mean += psi.component_mul(psi);
    }

    fn merge(&mut self, other: &Accum) {
        self.n += other.n;
        self.s_psi += &other.s_psi;
        self.s2_psi += &other.s2_psi;
        self.s_pw += &other.s_pw;
        self.s2_pw += &other.s2_pw;
        self.s_ep += &other.s_ep;
        self.s2_ep += &other.s2_ep;
        self.s_mean += &other.s_mean;
        self.s2_mean += &other.s2_mean;
    }
}

/// Mean and standard error of the mean from a sum and a sum of squares.
fn mean_stderr(s: f64, s2: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = s / nf;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

fn finish(s: &Mat, s2: &Mat, n: usize) -> (Mat, Mat) {
    let mut mean = Mat::zeros(s.nrows(), s.ncols());
    let mut se = Mat::zeros(s.nrows(), s.ncols());
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let (m, e) = mean_stderr(s[(i, j)], s2[(i, j)], n);
            mean[(i, j)] = m;
            se[(i, j)] = e;
        }
    }
    (mean, se)
}

fn batches(samples: usize) -> Vec<(u64, usize)> {
    (0..samples.div_ceil(BATCH))
        .map(|b| (b as u64, BATCH.min(samples - b * BATCH)))
        .collect()
}

/// Estimates `E[psi' psi'^T]`, `E[psi' w^T]` and `E[psi' e_t^T]` for the future innovations
/// `psi' = psi(C e_{t+i} + v_{t+i})`, `i = 1..N`, under the stationary filter.
pub fn estimate_moments(
    spec: &SystemSpec,
    gains: &SteadyGains,
    stack: &ErrorStack,
    psi: &PsiSpec,
    samples: usize,
    seed: u64,
) -> Result<MomentSet> {
    if samples == 0 {
        return Err(Error::Empty("moment estimation needs at least one sample".into()));
    }
    if linalg::min_sym_eigenvalue(&gains.p) <= 0.0 {
        return Err(Error::Parameter(
            "stationary error covariance is not positive definite".into(),
        ));
    }
    let (d, q, n) = (spec.state_dim(), spec.output_dim(), spec.horizon);
    if stack.f.nrows() != (n + 1) * d {
        return Err(Error::dim("error stack", (n + 1) * d, stack.f.nrows()));
    }
    let sqrt_p = linalg::psd_sqrt(&gains.p);
    let sqrt_w = linalg::psd_sqrt(&spec.sigma_w);
    let sqrt_v = linalg::psd_sqrt(&spec.sigma_v);
    let cal_c = linalg::block_diag(&vec![spec.c.clone(); n + 1]);
    // innovation stack = C F e + C G w + (I - C H) v, rows for offsets 1..N
    let cf = (&cal_c * &stack.f).rows(q, q * n).into_owned();
    let cg = (&cal_c * &stack.g).rows(q, q * n).into_owned();
    let ih = (Mat::identity((n + 1) * q, (n + 1) * q) - &cal_c * &stack.h)
        .rows(q, q * n)
        .into_owned();

    let partials: Vec<Accum> = batches(samples)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = batch_rng(seed, b);
            let mut acc = Accum::new(q * n, d * n, d);
            for _ in 0..count {
                let e = &sqrt_p * standard_normal(&mut rng, d);
                let w = gaussian_stack(&mut rng, &sqrt_w, n);
                let v = gaussian_stack(&mut rng, &sqrt_v, n + 1);
                let innov = &cf * &e + &cg * &w + &ih * &v;
                let p = psi.apply(&innov);
                acc.push(&p, &w, &e);
            }
            acc
        })
        .collect();
    let mut total = Accum::new(q * n, d * n, d);
    for p in &partials {
        total.merge(p);
    }

    let (mut sigma_psi, stderr_psi) = finish(&total.s_psi, &total.s2_psi, total.n);
    linalg::symmetrize(&mut sigma_psi);
    let (sigma_psi_w, stderr_psi_w) = finish(&total.s_pw, &total.s2_pw, total.n);
    let (sigma_e_psi, stderr_e_psi) = finish(&total.s_ep, &total.s2_ep, total.n);
    let mut psi_mean = Vector::zeros(q * n);
    let mut stderr_psi_mean = Vector::zeros(q * n);
    for i in 0..q * n {
        let (m, e) = mean_stderr(total.s_mean[i], total.s2_mean[i], total.n);
        psi_mean[i] = m;
        stderr_psi_mean[i] = e;
    }
    Ok(MomentSet {
        sigma_psi,
        sigma_psi_w,
        sigma_e_psi,
        psi_mean,
        stderr_psi,
        stderr_psi_w,
        stderr_e_psi,
        stderr_psi_mean,
        beta: None,
        samples,
        seed,
        spec_digest: spec_digest(spec, psi, gains),
    })
}

/// Monte-Carlo mean of `||Xi||`, the estimator's accumulated noise over `n_r` filter steps:
/// `Xi = sum_k A^{n_r-1-k} K (C A e_{t+k} + C w_{t+k} + v_{t+k+1})`.
pub fn estimate_beta(
    spec: &SystemSpec,
    gains: &SteadyGains,
    dec: &Decomposition,
    n_r: usize,
    samples: usize,
    seed: u64,
) -> Result<BetaEstimate> {
    if samples == 0 {
        return Err(Error::Empty("beta estimation needs at least one sample".into()));
    }
    let d = spec.state_dim();
    let sqrt_p = linalg::psd_sqrt(&gains.p);
    let sqrt_w = linalg::psd_sqrt(&spec.sigma_w);
    let sqrt_v = linalg::psd_sqrt(&spec.sigma_v);
    let mut weights = Vec::with_capacity(n_r);
    for k in 0..n_r {
        weights.push(linalg::mat_pow(&spec.a, n_r - 1 - k) * &gains.k);
    }
    let ca = &spec.c * &spec.a;
    let t_o = dec.t.rows(0, dec.d_o).into_owned();

    let partials: Vec<[f64; 3]> = batches(samples)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = batch_rng(seed, BETA_STREAM_BASE + b);
            let mut acc = [0.0; 3];
            for _ in 0..count {
                let mut e = &sqrt_p * standard_normal(&mut rng, d);
                let mut xi = Vector::zeros(d);
                for weight in &weights {
                    let w = &sqrt_w * standard_normal(&mut rng, sqrt_w.nrows());
                    let v = &sqrt_v * standard_normal(&mut rng, sqrt_v.nrows());
                    xi += weight * (&ca * &e + &spec.c * &w + &v);
                    e = &gains.phi * &e + &gains.gamma * &w - &gains.k * &v;
                }
                let norm = xi.norm();
                acc[0] += norm;
                acc[1] += norm * norm;
                acc[2] += (&t_o * &xi).norm();
            }
            acc
        })
        .collect();
    let mut total = [0.0; 3];
    for p in &partials {
        for i in 0..3 {
            total[i] += p[i];
        }
    }
    let (beta_hat, stderr) = mean_stderr(total[0], total[1], samples);
    Ok(BetaEstimate {
        beta_hat,
        stderr,
        beta_orthogonal: total[2] / samples as f64,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    qn: usize,
    dn: usize,
    d: usize,
    samples: usize,
    seed: u64,
    spec_digest: String,
    has_beta: bool,
}

fn put_matrix(buf: &mut Vec<u8>, m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checksum("file is truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
}

pub fn encode_cache(ms: &MomentSet) -> Result<Vec<u8>> {
    let header = Header {
        qn: ms.sigma_psi.nrows(),
        dn: ms.sigma_psi_w.ncols(),
        d: ms.sigma_e_psi.ncols(),
        samples: ms.samples,
        seed: ms.seed,
        spec_digest: ms.spec_digest.clone(),
        has_beta: ms.beta.is_some(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for m in [
        &ms.sigma_psi,
        &ms.sigma_psi_w,
        &ms.sigma_e_psi,
        &ms.stderr_psi,
        &ms.stderr_psi_w,
        &ms.stderr_e_psi,
    ] {
        put_matrix(&mut buf, m);
    }
    for v in ms.psi_mean.iter().chain(ms.stderr_psi_mean.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(b) = ms.beta {
        for v in [b.beta_hat, b.stderr, b.beta_orthogonal] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub fn decode_cache(bytes: &[u8]) -> Result<MomentSet> {
    if bytes.len() < MAGIC.len() + 8 + 32 {
        return Err(Error::Checksum("file is too short".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Checksum("sha256 trailer does not match contents".into()));
    }
    let mut r = Reader { data: body, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checksum("bad magic string".into()));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)?;
    let (qn, dn, d) = (header.qn, header.dn, header.d);
    let sigma_psi = r.matrix(qn, qn)?;
    let sigma_psi_w = r.matrix(qn, dn)?;
    let sigma_e_psi = r.matrix(qn, d)?;
    let stderr_psi = r.matrix(qn, qn)?;
    let stderr_psi_w = r.matrix(qn, dn)?;
    let stderr_e_psi = r.matrix(qn, d)?;
    let psi_mean = Vector::from_iterator(qn, r.matrix(qn, 1)?.iter().copied());
    let stderr_psi_mean = Vector::from_iterator(qn, r.matrix(qn, 1)?.iter().copied());
    let beta = if header.has_beta {
        Some(BetaEstimate {
            beta_hat: r.f64()?,
            stderr: r.f64()?,
            beta_orthogonal: r.f64()?,
        })
    } else {
        None
    };
    if r.pos != body.len() {
        return Err(Error::Checksum("trailing bytes after payload".into()));
    }
    Ok(MomentSet {
        sigma_psi,
        sigma_psi_w,
        sigma_e_psi,
        psi_mean,
        stderr_psi,
        stderr_psi_w,
        stderr_e_psi,
        stderr_psi_mean,
        beta,
        samples: header.samples,
        seed: header.seed,
        spec_digest: header.spec_digest,
    })
}

pub fn write_cache(ms: &MomentSet, path: &Path) -> Result<()> {
    fs::write(path, encode_cache(ms)?)?;
    Ok(())
}

/// Reads a cache, rejecting it if `expected_digest` is given and differs.
pub fn read_cache(path: &Path, expected_digest: Option<&str>) -> Result<MomentSet> {
    let ms = decode_cache(&fs::read(path)?)?;
    if let Some(expected) = expected_digest {
        if ms.spec_digest != expected {
            return Err(Error::StaleCache {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                found: ms.spec_digest,
            });
        }
    }
    Ok(ms)
}

pub fn cache_roundtrip(ms: &MomentSet, path: &Path) -> Result<MomentSet> {
    write_cache(ms, path)?;
    read_cache(path, Some(&ms.spec_digest))
}
