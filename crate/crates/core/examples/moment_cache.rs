//! Estimates the offline moment matrices for the benchmark, writes them to a cache file and
//! reads them back with a digest check.

use ofspc::control_loop::SimConfig;
use ofspc::kalman::{error_stack, steady_state};
use ofspc::moments::{estimate_beta, estimate_moments, read_cache, write_cache};
use ofspc::{decompose, PsiSpec, SystemSpec};

fn main() -> ofspc::Result<()> {
    let spec = SystemSpec::benchmark(1.0);
    let psi = PsiSpec::sigmoid();
    let gains = steady_state(&spec)?;
    let stack = error_stack(&gains, &spec, spec.horizon);
    let mut ms = estimate_moments(&spec, &gains, &stack, &psi, 50_000, 0)?;
    let n_r = SimConfig::new(spec.clone(), psi)?.n_r;
    ms.beta = Some(estimate_beta(&spec, &gains, &decompose(&spec)?, n_r, 50_000, 0)?);

    println!(
        "diag Sigma_psi (first 8): {:.4}",
        ms.sigma_psi.diagonal().rows(0, 8).transpose()
    );
    println!("largest standard error: {:.2e}", ms.max_stderr());
    println!("beta_hat = {:.4}", ms.beta_hat().unwrap_or(f64::NAN));

    let path = std::env::temp_dir().join("ofspc_example_moments.bin");
    write_cache(&ms, &path)?;
    let back = read_cache(&path, Some(&ms.spec_digest))?;
    println!("cache {} round-trips: {}", path.display(), back == ms);
    match read_cache(&path, Some("another configuration")) {
        Err(e) => println!("mismatched digest: {e}"),
        Ok(_) => println!("digest check missed"),
    }
    Ok(())
}
