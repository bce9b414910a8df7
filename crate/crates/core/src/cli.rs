//! Command-line front end. Exit codes: 0 success, 1 domain failure, 2 usage or config failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::Config;
use crate::control_loop::{self, Experiment};
use crate::decomp;
use crate::error::{Error, Result};
use crate::kalman;
use crate::moments::{self, MomentSet};
use crate::ocp;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Samples used for the beta estimate printed by `validate`.
const VALIDATE_BETA_SAMPLES: usize = 20_000;
const FEW_SAMPLES: usize = 10_000;
pub const STATISTIC: &str = "max over t of the path-averaged squared state norm";

#[derive(Debug, Parser)]
#[command(
    name = "ofspc",
    version,
    about = "Output-feedback stochastic predictive control under hard input bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check standing assumptions and print the decomposition.
    Validate { config: PathBuf },
    /// Estimate the offline moment matrices and write a cache file.
    Moments {
        config: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate closed-loop paths at one input bound and write per-path CSVs.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        moments: Option<PathBuf>,
        /// Defaults to the first bound in the config.
        #[arg(long)]
        u_max: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every configured input bound and write sweep.csv.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        moments: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParams {
    pub horizon: usize,
    pub n_r: usize,
    pub kappa: usize,
    pub d_o: usize,
    pub d_s: usize,
    pub u_max: Vec<f64>,
    pub zeta: Vec<f64>,
    pub zeta_fraction: f64,
    pub r: f64,
    pub epsilon: f64,
    pub psi: String,
    pub psi_max: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub moment_samples: usize,
    pub moment_seed: u64,
    pub statistic: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub version: String,
    pub params: ResolvedParams,
    pub moments_digest: String,
    pub moments_source: String,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_DOMAIN,
    }
}

fn report(err: &Error) -> i32 {
    eprintln!("error: {err}");
    if matches!(err, Error::StaleCache { .. }) {
        eprintln!("hint: the moment cache was produced for a different configuration; re-run `ofspc moments`");
    }
    exit_code(err)
}

pub fn cmd_validate(config_path: &Path) -> i32 {
    let cfg = match Config::load(config_path) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    let report_ = match cfg.spec.validate() {
        Ok(r) => r,
        Err(e) => return report(&e),
    };
    for c in &report_.checks {
        println!(
            "{:<5} {:<36} margin {:+.3e}  {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.margin,
            c.detail
        );
    }
    if !report_.all_passed() {
        eprintln!("failed: {}", report_.failure_names().join(", "));
        return EXIT_DOMAIN;
    }
    let run = || -> Result<()> {
        let dec = decomp::decompose(&cfg.spec)?;
        println!("d_o = {}, d_s = {}, kappa = {}", dec.d_o, dec.d_s, dec.kappa);
        println!("transform condition number = {:.3e}", dec.condition);
        if dec.d_o == 0 {
            println!("A is Schur stable; no stability constraints are needed");
            return Ok(());
        }
        let gains = kalman::steady_state(&cfg.spec)?;
        let n_r = cfg.n_r.unwrap_or(dec.kappa);
        let beta = moments::estimate_beta(&cfg.spec, &gains, &dec, n_r, VALIDATE_BETA_SAMPLES, cfg.seed)?;
        println!(
            "beta_hat = {:.4} (stderr {:.1e}, orthogonal part {:.4})",
            beta.beta_hat, beta.stderr, beta.beta_orthogonal
        );
        let threshold = ocp::prior_feasibility_threshold(&dec, beta.beta_hat, 0.0, n_r);
        println!("norm-ball drift constraint needs u_max >= {threshold:.4}");
        for &u in &cfg.u_max {
            println!("u_max = {u}: zeta_max = {:.6}", dec.zeta_bound(u)?);
        }
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

pub fn cmd_moments(config_path: &Path, samples: Option<usize>, seed: Option<u64>, out: &Path) -> i32 {
    let run = || -> Result<()> {
        let cfg = Config::load(config_path)?;
        let samples = samples.unwrap_or(cfg.samples);
        let seed = seed.unwrap_or(cfg.seed);
        if samples < FEW_SAMPLES {
            eprintln!("warning: {samples} samples; standard errors will be large");
        }
        let ms = estimate_all(&cfg, samples, seed)?;
        moments::write_cache(&ms, out)?;
        println!("wrote {} ({} samples, seed {})", out.display(), ms.samples, ms.seed);
        println!("digest {}", ms.spec_digest);
        println!(
            "max stderr: Sigma_psi {:.2e}, Sigma_psi_w {:.2e}, Sigma_e_psi {:.2e}",
            crate::linalg::max_abs(&ms.stderr_psi),
            crate::linalg::max_abs(&ms.stderr_psi_w),
            crate::linalg::max_abs(&ms.stderr_e_psi)
        );
        if let Some(b) = ms.beta {
            println!("beta_hat = {:.6} (stderr {:.2e})", b.beta_hat, b.stderr);
        }
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

/// Moments plus beta, as written by `moments`.
pub fn estimate_all(cfg: &Config, samples: usize, seed: u64) -> Result<MomentSet> {
    cfg.spec.ensure_valid()?;
    let gains = kalman::steady_state(&cfg.spec)?;
    let stack = kalman::error_stack(&gains, &cfg.spec, cfg.spec.horizon);
    let mut ms = moments::estimate_moments(&cfg.spec, &gains, &stack, &cfg.psi, samples, seed)?;
    let dec = decomp::decompose(&cfg.spec)?;
    let n_r = cfg.n_r.unwrap_or(dec.kappa).max(1);
    ms.beta = Some(moments::estimate_beta(&cfg.spec, &gains, &dec, n_r, samples, seed)?);
    Ok(ms)
}

struct Prepared {
    exp: Experiment,
    manifest: RunManifest,
}

fn prepare(
    command: &str,
    config_path: &Path,
    moments_path: Option<&Path>,
    paths: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    u_max: Option<Vec<f64>>,
) -> Result<Prepared> {
    let cfg = Config::load(config_path)?;
    let mut sim = cfg.sim_config()?;
    if let Some(p) = paths {
        sim.paths = p;
    }
    if let Some(s) = steps {
        sim.steps = s;
    }
    if let Some(s) = seed {
        sim.base_seed = s;
    }
    if let Some(u) = u_max {
        sim.u_max_sweep = u;
    }
    if sim.paths == 0 || sim.steps == 0 {
        return Err(Error::Config("paths and steps must be positive".into()));
    }
    let (ms, source) = match moments_path {
        Some(p) => {
            let gains = kalman::steady_state(&sim.spec)?;
            let expected = moments::spec_digest(&sim.spec, &sim.psi, &gains);
            (moments::read_cache(p, Some(&expected))?, p.display().to_string())
        }
        None => (
            estimate_all(&cfg, cfg.samples, cfg.seed)?,
            "estimated in-process".to_string(),
        ),
    };
    let exp = Experiment::new(sim, ms)?;
    let zeta = exp
        .cfg
        .u_max_sweep
        .iter()
        .map(|&u| exp.thresholds(u).map(|t| t.zeta))
        .collect::<Result<Vec<_>>>()?;
    let c = &exp.cfg;
    let params = ResolvedParams {
        horizon: c.spec.horizon,
        n_r: c.n_r,
        kappa: exp.dec.kappa,
        d_o: exp.dec.d_o,
        d_s: exp.dec.d_s,
        u_max: c.u_max_sweep.clone(),
        zeta,
        zeta_fraction: c.zeta_fraction,
        r: c.r,
        epsilon: c.epsilon,
        psi: format!("{:?}", c.psi.kind).to_lowercase(),
        psi_max: c.psi.psi_max,
        steps: c.steps,
        paths: c.paths,
        seed: c.base_seed,
        moment_samples: exp.moments.samples,
        moment_seed: exp.moments.seed,
        statistic: STATISTIC.to_string(),
    };
    let manifest = RunManifest {
        command: command.to_string(),
        config_path: config_path.display().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        params,
        moments_digest: exp.moments.spec_digest.clone(),
        moments_source: source,
    };
    Ok(Prepared { exp, manifest })
}

fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    config_path: &Path,
    moments_path: Option<&Path>,
    u_max: Option<f64>,
    paths: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    out_dir: &Path,
) -> i32 {
    let run = || -> Result<()> {
        let cfg = Config::load(config_path)?;
        let u = u_max.unwrap_or(cfg.u_max[0]);
        let prep = prepare("simulate", config_path, moments_path, paths, steps, seed, Some(vec![u]))?;
        let results = control_loop::run_paths(&prep.exp, u)?;
        fs::create_dir_all(out_dir)?;
        for res in &results {
            control_loop::write_path_csv(res, &out_dir.join(format!("path_{}.csv", res.path_index)))?;
        }
        let row = control_loop::summarize(u, &results, &prep.exp.cfg)?;
        control_loop::write_sweep_csv(std::slice::from_ref(&row), &out_dir.join("sweep.csv"))?;
        write_manifest(&prep.manifest, out_dir)?;
        println!(
            "u_max {u}: ms_bound {:.4}, fallback_rate {}, mean_qp_iters {:.1}, max |u| {:.6}",
            row.ms_bound, row.fallback_rate, row.mean_qp_iters, row.max_abs_u
        );
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

pub fn cmd_sweep(
    config_path: &Path,
    moments_path: Option<&Path>,
    paths: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    out_dir: &Path,
) -> i32 {
    let run = || -> Result<()> {
        let prep = prepare("sweep", config_path, moments_path, paths, steps, seed, None)?;
        let rows = control_loop::sweep(&prep.exp)?;
        fs::create_dir_all(out_dir)?;
        control_loop::write_sweep_csv(&rows, &out_dir.join("sweep.csv"))?;
        write_manifest(&prep.manifest, out_dir)?;
        for r in &rows {
            println!(
                "u_max {:>6}: ms_bound {:>10.4}  fallback_rate {}  mean_qp_iters {:.1}",
                r.u_max, r.ms_bound, r.fallback_rate, r.mean_qp_iters
            );
        }
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

/// Caps the worker pool from `OFSPC_THREADS`; results never depend on it.
fn configure_threads() {
    if let Some(n) = std::env::var("OFSPC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Moments {
            config,
            samples,
            seed,
            out,
        } => cmd_moments(&config, samples, seed, &out),
        Command::Simulate {
            config,
            moments,
            u_max,
            paths,
            steps,
            seed,
            out_dir,
        } => cmd_simulate(&config, moments.as_deref(), u_max, paths, steps, seed, &out_dir),
        Command::Sweep {
            config,
            moments,
            paths,
            steps,
            seed,
            out_dir,
        } => cmd_sweep(&config, moments.as_deref(), paths, steps, seed, &out_dir),
    }
}
