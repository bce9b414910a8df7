//! Saturated-innovation affine policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiKind {
    /// `psi_max * (1 - e^{-z}) / (1 + e^{-z})`, i.e. `psi_max * tanh(z / 2)`.
    Sigmoid,
    /// Hard clip to `[-psi_max, psi_max]`.
    #[serde(alias = "hard-saturation")]
    Saturation,
}

/// Componentwise odd, bounded nonlinearity applied to innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiSpec {
    pub kind: PsiKind,
    pub psi_max: f64,
}

impl PsiSpec {
    pub fn sigmoid() -> Self {
        PsiSpec {
            kind: PsiKind::Sigmoid,
            psi_max: 1.0,
        }
    }

    pub fn saturation(psi_max: f64) -> Self {
        PsiSpec {
            kind: PsiKind::Saturation,
            psi_max,
        }
    }

    pub fn scalar(&self, z: f64) -> f64 {
        match self.kind {
            // evaluated on |z| so that oddness is exact
            PsiKind::Sigmoid => {
                let mag = self.psi_max * (0.5 * z.abs()).tanh();
                if z < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            PsiKind::Saturation => {
                let mag = z.abs().min(self.psi_max);
                if z < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        }
    }

    pub fn apply(&self, z: &Vector) -> Vector {
        z.map(|v| self.scalar(v))
    }
}

pub fn psi_apply(psi: &PsiSpec, z: &Vector) -> Vector {
    psi.apply(z)
}

/// Componentwise `z * zeta / r` inside `[-r, r]`, `+-zeta` outside.
pub fn sat_r_zeta(z: &Vector, r: f64, zeta: f64) -> Result<Vector> {
    if !(r > 0.0) {
        return Err(Error::Parameter(format!(
            "saturation radius r must be positive, got {r}"
        )));
    }
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!(
            "saturation level zeta must be positive, got {zeta}"
        )));
    }
    Ok(z.map(|v| {
        if v.abs() <= r {
            v * zeta / r
        } else if v > 0.0 {
            zeta
        } else {
            -zeta
        }
    }))
}

/// `(eta, Theta)` of the policy `u_{t+l} = eta_l + sum_{i<=l} theta_{l,i} psi(innovation_{t+i})`.
///
/// Only the lower-triangular `m x q` blocks of `Theta` are stored; the last block column
/// (stage-`N` innovation) is structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub horizon: usize,
    pub m: usize,
    pub q: usize,
    pub eta: Vector,
    theta: Vec<Mat>,
}

impl PolicyParams {
    pub fn zeros(horizon: usize, m: usize, q: usize) -> Self {
        let blocks = horizon * (horizon + 1) / 2;
        PolicyParams {
            horizon,
            m,
            q,
            eta: Vector::zeros(horizon * m),
            theta: vec![Mat::zeros(m, q); blocks],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.theta.len()
    }

    pub fn block_index(stage: usize, offset: usize) -> usize {
        debug_assert!(offset <= stage);
        stage * (stage + 1) / 2 + offset
    }

    pub fn theta(&self, stage: usize, offset: usize) -> &Mat {
        &self.theta[Self::block_index(stage, offset)]
    }

    pub fn theta_mut(&mut self, stage: usize, offset: usize) -> &mut Mat {
        &mut self.theta[Self::block_index(stage, offset)]
    }

    pub fn eta_stage(&self, stage: usize) -> Vector {
        self.eta.rows(stage * self.m, self.m).into_owned()
    }

    /// Dense `mN x q(N+1)` gain matrix.
    pub fn assemble_theta(&self) -> Mat {
        let (n, m, q) = (self.horizon, self.m, self.q);
        let mut out = Mat::zeros(n * m, (n + 1) * q);
        for l in 0..n {
            for i in 0..=l {
                out.view_mut((l * m, i * q), (m, q)).copy_from(self.theta(l, i));
            }
        }
        out
    }

    /// Control at `stage` from already-transformed innovations `psi_values[i] = psi(innovation_{t+i})`.
    pub fn eval_transformed(&self, psi_values: &[Vector], stage: usize) -> Result<Vector> {
        if stage >= self.horizon {
            return Err(Error::Parameter(format!(
                "stage {stage} outside horizon {}",
                self.horizon
            )));
        }
        if psi_values.len() <= stage {
            return Err(Error::Causality(psi_values.len()));
        }
        let mut u = self.eta_stage(stage);
        for (i, p) in psi_values.iter().take(stage + 1).enumerate() {
            u += self.theta(stage, i) * p;
        }
        Ok(u)
    }

    /// Control at `stage` from raw innovations `y_{t+i} - C x_hat_{t+i}`, `i = 0..=stage`.
    pub fn eval(&self, innovations: &[Vector], psi: &PsiSpec, stage: usize) -> Result<Vector> {
        if innovations.len() <= stage {
            return Err(Error::Causality(innovations.len()));
        }
        let transformed: Vec<Vector> = innovations.iter().take(stage + 1).map(|z| psi.apply(z)).collect();
        self.eval_transformed(&transformed, stage)
    }

    /// Per-row slack `u_max - |eta_i| - psi_max * ||Theta_i||_1`.
    pub fn hard_bound_margin(&self, psi_max: f64, u_max: f64) -> Vector {
        let theta = self.assemble_theta();
        Vector::from_iterator(
            self.eta.len(),
            (0..self.eta.len()).map(|i| {
                let l1: f64 = theta.row(i).iter().map(|v| v.abs()).sum();
                u_max - self.eta[i].abs() - psi_max * l1
            }),
        )
    }
}

pub fn eval_policy(p: &PolicyParams, innovations: &[Vector], psi: &PsiSpec, stage: usize) -> Result<Vector> {
    p.eval(innovations, psi, stage)
}

pub fn hard_bound_margin(p: &PolicyParams, psi_max: f64, u_max: f64) -> Vector {
    p.hard_bound_margin(psi_max, u_max)
}
