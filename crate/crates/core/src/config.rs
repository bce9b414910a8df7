//! JSON experiment configuration.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::control_loop::SimConfig;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::SystemSpec;
use crate::moments::DEFAULT_SAMPLES;
use crate::policy::{PsiKind, PsiSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MatrixOrList {
    One(Vec<Vec<f64>>),
    Many(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrList {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawConfig {
    A: Vec<Vec<f64>>,
    B: Vec<Vec<f64>>,
    C: Vec<Vec<f64>>,
    Sigma_x0: Vec<Vec<f64>>,
    Sigma_w: Vec<Vec<f64>>,
    Sigma_v: Vec<Vec<f64>>,
    Q: MatrixOrList,
    Q_N: Vec<Vec<f64>>,
    R: MatrixOrList,
    N: usize,
    #[serde(default)]
    N_r: Option<usize>,
    u_max: NumOrList,
    #[serde(default = "default_r")]
    r: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_zeta_fraction")]
    zeta_fraction: f64,
    #[serde(default = "default_psi")]
    psi: PsiKind,
    #[serde(default = "default_psi_max")]
    psi_max: f64,
    #[serde(default = "default_steps")]
    steps: usize,
    #[serde(default = "default_paths")]
    paths: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_r() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_zeta_fraction() -> f64 {
    0.1
}
fn default_psi() -> PsiKind {
    PsiKind::Sigmoid
}
fn default_psi_max() -> f64 {
    1.0
}
fn default_steps() -> usize {
    90
}
fn default_paths() -> usize {
    100
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

/// A parsed configuration with every default resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Plant and costs; `u_max` holds the first listed bound.
    pub spec: SystemSpec,
    pub psi: PsiSpec,
    /// `None` means "use the reachability index".
    pub n_r: Option<usize>,
    pub u_max: Vec<f64>,
    pub r: f64,
    pub epsilon: f64,
    pub zeta_fraction: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub samples: usize,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Config(format!("`{name}` must be a non-empty matrix")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Config(format!(
            "`{name}` row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn stage_list(name: &str, value: &MatrixOrList, horizon: usize) -> Result<Vec<Mat>> {
    match value {
        MatrixOrList::One(m) => Ok(vec![matrix(name, m)?; horizon]),
        MatrixOrList::Many(list) => {
            if list.len() != horizon {
                return Err(Error::Config(format!(
                    "`{name}` lists {} matrices for horizon {horizon}",
                    list.len()
                )));
            }
            list.iter()
                .enumerate()
                .map(|(i, m)| matrix(&format!("{name}[{i}]"), m))
                .collect()
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)?;
        if raw.N == 0 {
            return Err(Error::Config("horizon `N` must be at least 1".into()));
        }
        let u_max = match raw.u_max {
            NumOrList::One(u) => vec![u],
            NumOrList::Many(list) => list,
        };
        if u_max.is_empty() || u_max.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::Config(
                "`u_max` must be positive (or a non-empty list of positive values)".into(),
            ));
        }
        if !(raw.psi_max > 0.0) {
            return Err(Error::Config("`psi_max` must be positive".into()));
        }
        let spec = SystemSpec {
            a: matrix("A", &raw.A)?,
            b: matrix("B", &raw.B)?,
            c: matrix("C", &raw.C)?,
            sigma_x0: matrix("Sigma_x0", &raw.Sigma_x0)?,
            sigma_w: matrix("Sigma_w", &raw.Sigma_w)?,
            sigma_v: matrix("Sigma_v", &raw.Sigma_v)?,
            q_list: stage_list("Q", &raw.Q, raw.N)?,
            q_terminal: matrix("Q_N", &raw.Q_N)?,
            r_list: stage_list("R", &raw.R, raw.N)?,
            horizon: raw.N,
            u_max: u_max[0],
        };
        spec.check_dimensions().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Config {
            spec,
            psi: PsiSpec {
                kind: raw.psi,
                psi_max: raw.psi_max,
            },
            n_r: raw.N_r,
            u_max,
            r: raw.r,
            epsilon: raw.epsilon,
            zeta_fraction: raw.zeta_fraction,
            steps: raw.steps,
            paths: raw.paths,
            seed: raw.seed,
            samples: raw.samples,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Simulation settings; `N_r` defaults to the reachability index.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::new(self.spec.clone(), self.psi)?;
        if let Some(n_r) = self.n_r {
            cfg.n_r = n_r;
        }
        cfg.r = self.r;
        cfg.epsilon = self.epsilon;
        cfg.zeta_fraction = self.zeta_fraction;
        cfg.steps = self.steps;
        cfg.paths = self.paths;
        cfg.base_seed = self.seed;
        cfg.u_max_sweep = self.u_max.clone();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{
        "A": [[1.0]], "B": [[1.0]], "C": [[1.0]],
        "Sigma_x0": [[1.0]], "Sigma_w": [[1.0]], "Sigma_v": [[1.0]],
        "Q": [[1.0]], "Q_N": [[1.0]], "R": [[1.0]],
        "N": 3, "u_max": [0.5, 2]
    }"#;

    #[test]
    fn defaults_resolved() {
        let c = Config::parse(SCALAR).unwrap();
        assert_eq!(c.u_max, vec![0.5, 2.0]);
        assert_eq!(c.spec.q_list.len(), 3);
        assert_eq!((c.steps, c.paths, c.seed, c.r, c.epsilon), (90, 100, 0, 1.0, 0.1));
        assert_eq!(c.psi, PsiSpec::sigmoid());
    }

    #[test]
    fn missing_field_is_json_error() {
        let text = SCALAR.replace(r#""Sigma_w": [[1.0]], "#, "");
        let err = Config::parse(&text).unwrap_err();
        assert!(matches!(err, Error::Json(_)));
        assert!(err.to_string().contains("Sigma_w"));
    }

    #[test]
    fn ragged_matrix_rejected() {
        let text = SCALAR.replace(r#""A": [[1.0]]"#, r#""A": [[1.0, 0.0], [1.0]]"#);
        assert!(matches!(Config::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn per_stage_weights() {
        let text = SCALAR.replace(r#""Q": [[1.0]]"#, r#""Q": [[[1.0]], [[2.0]], [[3.0]]]"#);
        let c = Config::parse(&text).unwrap();
        assert_eq!(c.spec.q_list[2][(0, 0)], 3.0);
    }
}
