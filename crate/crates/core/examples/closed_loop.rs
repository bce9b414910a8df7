//! Simulates closed-loop paths at one input bound, audits the drift of the marginally
//! stable coordinates and writes the first path to CSV.
//!
//! Usage: `cargo run --release --example closed_loop -- [u_max] [paths]`

use ofspc::control_loop::{drift_audit, empirical_ms_bound, run_paths, write_path_csv, Experiment, SimConfig};
use ofspc::{PsiSpec, SystemSpec};

fn main() -> ofspc::Result<()> {
    let mut args = std::env::args().skip(1);
    let u_max: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let paths: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);

    let mut cfg = SimConfig::new(SystemSpec::benchmark(u_max), PsiSpec::sigmoid())?;
    cfg.paths = paths;
    let exp = Experiment::estimate(cfg, 50_000, 0)?;
    let results = run_paths(&exp, u_max)?;

    let max_u = results.iter().map(|r| r.max_abs_u).fold(0.0, f64::max);
    let fallbacks: usize = results.iter().map(|r| r.fallback_count).sum();
    println!("u_max {u_max}, {paths} paths x {} steps", exp.cfg.steps);
    println!(
        "mean-square bound {:.3}, max |u| {max_u:.6}, fallbacks {fallbacks}",
        empirical_ms_bound(&results)?
    );

    let audit = drift_audit(&results, &exp.dec, &exp.cfg)?;
    for c in &audit.components {
        println!(
            "  z{}: above {:>4} events, mean {:+.3}; below {:>4} events, mean {:+.3}",
            c.component, c.above.events, c.above.mean, c.below.events, c.below.mean
        );
    }
    println!(
        "drift audit (zeta = {:.4}): {}",
        audit.zeta,
        if audit.passed() { "passed" } else { "not passed" }
    );

    let csv = std::env::temp_dir().join("ofspc_example_path_0.csv");
    write_path_csv(&results[0], &csv)?;
    println!("wrote {}", csv.display());
    Ok(())
}
