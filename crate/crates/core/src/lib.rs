//! Output-feedback stochastic predictive control under hard input bounds.
//!
//! A Kalman filter feeds a receding-horizon controller whose policies are affine in
//! saturated innovations. Each recalculation solves a convex QP that keeps inputs within
//! their bound for every noise realization and forces a drift on the marginally stable
//! modes, so the closed loop stays mean-square bounded for any positive bound.

// `!(x > 0.0)` is deliberate throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod control_loop;
pub mod decomp;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod ocp;
pub mod policy;
pub mod qpsolver;

pub use decomp::{decompose, Decomposition};
pub use error::{Error, Result};
pub use kalman::{FilterState, SteadyGains};
pub use linalg::{Mat, Vector};
pub use model::{SystemSpec, ValidationReport};
pub use moments::MomentSet;
pub use ocp::{OcpContext, Thresholds};
pub use policy::{PolicyParams, PsiKind, PsiSpec};
pub use qpsolver::{QpProblem, QpSettings, QpSolution, QpStatus};
