//! Runs the time-varying filter on a simulated open-loop trajectory and compares its
//! covariance with the stationary solution.

use ofspc::kalman::{init_filter, steady_state, step};
use ofspc::{SystemSpec, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn main() -> ofspc::Result<()> {
    let spec = SystemSpec::benchmark(1.0);
    let gains = steady_state(&spec)?;
    println!(
        "stationary trace(P) = {:.6} after {} iterations",
        gains.p.trace(),
        gains.iterations
    );
    println!("stationary gain K =\n{:.4}", gains.k);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = noise(&mut rng, 4);
    let mut filter = init_filter(&spec, &(&spec.c * &x + noise(&mut rng, 4)))?;
    let u = Vector::zeros(1);
    for t in 1..=30 {
        x = &spec.a * &x + noise(&mut rng, 4);
        let y = &spec.c * &x + noise(&mut rng, 4);
        filter = step(&filter, &u, &y, &spec)?;
        if t % 5 == 0 {
            println!(
                "t = {t:>2}  trace(P_t) = {:.6}  |x - x_hat| = {:.3}",
                filter.p.trace(),
                (&x - &filter.x_hat).norm()
            );
        }
    }
    Ok(())
}
