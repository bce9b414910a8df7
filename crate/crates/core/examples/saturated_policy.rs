//! Builds a policy that uses its full input budget and shows that no innovation sequence,
//! however large, pushes an input past the bound.

use ofspc::{Mat, PolicyParams, PsiSpec, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ofspc::Result<()> {
    let (n, m, q, u_max) = (5, 1, 4, 0.5);
    let psi = PsiSpec::sigmoid();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = PolicyParams::zeros(n, m, q);
    p.eta = Vector::from_fn(n * m, |_, _| rng.random_range(-0.2..0.2));
    for l in 0..n {
        for i in 0..=l {
            *p.theta_mut(l, i) = Mat::from_fn(m, q, |_, _| rng.random_range(-1.0..1.0));
        }
    }
    // rescale each stage so that |eta| + psi_max ||Theta_row||_1 = u_max
    let margin = p.hard_bound_margin(psi.psi_max, u_max);
    for l in 0..n {
        let scale = u_max / (u_max - margin[l]);
        p.eta[l] *= scale;
        for i in 0..=l {
            *p.theta_mut(l, i) *= scale;
        }
    }
    println!(
        "smallest margin after scaling: {:.1e}",
        p.hard_bound_margin(psi.psi_max, u_max).min()
    );

    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let innov: Vec<Vector> = (0..n)
            .map(|_| Vector::from_fn(q, |_, _| rng.random_range(-1e3..1e3)))
            .collect();
        for stage in 0..n {
            worst = worst.max(p.eval(&innov, &psi, stage)?.amax());
        }
    }
    println!("largest |u| over 10000 draws: {worst:.9} (bound {u_max})");
    Ok(())
}
