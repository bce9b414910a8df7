//! Mean-square bound of the closed loop across input bounds, printed as `sweep.csv`.
//!
//! Usage: `cargo run --release --example input_sweep -- [paths]`. The full reproduction
//! uses 100 paths (`ofspc sweep configs/benchmark.json --out-dir out`).

use ofspc::control_loop::{sweep, sweep_csv, Experiment, SimConfig};
use ofspc::{PsiSpec, SystemSpec};

fn main() -> ofspc::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let mut cfg = SimConfig::new(SystemSpec::benchmark(1.0), PsiSpec::sigmoid())?;
    cfg.paths = paths;
    cfg.u_max_sweep = vec![0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 20.0];
    let exp = Experiment::estimate(cfg, 100_000, 0)?;
    print!("{}", sweep_csv(&sweep(&exp)?));
    Ok(())
}
