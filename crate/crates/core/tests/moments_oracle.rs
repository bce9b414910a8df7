mod common;

use common::{bisection, integrate, saturated_second_moment, scalar_spec};
use ofspc::kalman::{error_stack, steady_state};
use ofspc::moments::{decode_cache, encode_cache, estimate_beta, estimate_moments, read_cache, write_cache};
use ofspc::{decompose, linalg, Error, PsiSpec, SystemSpec};

/// Deviation allowed between a Monte-Carlo entry and its oracle, in standard errors.
const STDERR_MULTIPLE: f64 = 3.0;
const SAMPLES: usize = 100_000;

struct ScalarOracle {
    k: f64,
    a: f64,
    p: f64,
    /// Variance of the one-step prediction residual.
    pred_var: f64,
}

fn scalar_oracle(a: f64, w: f64, v: f64) -> ScalarOracle {
    let p = bisection(
        |p| {
            let m = a * a * p + w;
            m * v / (m + v) - p
        },
        0.0,
        w + v,
    );
    let m = a * a * p + w;
    ScalarOracle {
        k: m / (m + v),
        a,
        p,
        pred_var: m + v,
    }
}

fn within(est: f64, oracle: f64, se: f64) -> bool {
    (est - oracle).abs() <= STDERR_MULTIPLE * se + 1e-12
}

#[test]
fn saturated_moments_match_gaussian_quadrature() {
    let (a, w, v, c, n) = (1.0, 1.0, 1.0, 0.5, 3);
    let spec = scalar_spec(a, 1.0, w, v, n, 1.0);
    let gains = steady_state(&spec).unwrap();
    let stack = error_stack(&gains, &spec, n);
    let psi = PsiSpec::saturation(c);
    let ms = estimate_moments(&spec, &gains, &stack, &psi, SAMPLES, 5).unwrap();

    let o = scalar_oracle(a, w, v);
    // posterior residual at every future offset is (1 - K) times a white prediction residual
    let s = (1.0 - o.k) * o.pred_var.sqrt();
    let pdf = |z: f64| (-0.5 * (z / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let inside = 2.0 * integrate(pdf, 0.0, c, 40);
    let second = saturated_second_moment(s, c);
    let rho = o.a * (1.0 - o.k);

    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { second } else { 0.0 };
            assert!(
                within(ms.sigma_psi[(i, j)], expect, ms.stderr_psi[(i, j)]),
                "Sigma_psi[{i},{j}] = {} vs {expect}",
                ms.sigma_psi[(i, j)]
            );
            // Stein: E[psi(X) W] = P(|X| < c) Cov(X, W) for the clip nonlinearity
            let offset = i + 1;
            let cov = if j < offset {
                (1.0 - o.k) * rho.powi((offset - 1 - j) as i32)
            } else {
                0.0
            } * w;
            assert!(
                within(ms.sigma_psi_w[(i, j)], inside * cov, ms.stderr_psi_w[(i, j)]),
                "Sigma_psi_w[{i},{j}] = {} vs {}",
                ms.sigma_psi_w[(i, j)],
                inside * cov
            );
        }
        let cov_e = (1.0 - o.k) * o.a * rho.powi(i as i32) * o.p;
        assert!(within(ms.sigma_e_psi[(i, 0)], inside * cov_e, ms.stderr_e_psi[(i, 0)]));
        assert!(within(ms.psi_mean[i], 0.0, ms.stderr_psi_mean[i]));
    }
}

#[test]
fn benchmark_moments_are_consistent() {
    let spec = SystemSpec::benchmark(1.0);
    let gains = steady_state(&spec).unwrap();
    let stack = error_stack(&gains, &spec, spec.horizon);
    let ms = estimate_moments(&spec, &gains, &stack, &PsiSpec::sigmoid(), SAMPLES, 1).unwrap();
    assert_eq!(ms.sigma_psi.shape(), (20, 20));
    assert_eq!(ms.sigma_psi_w.shape(), (20, 20));
    assert_eq!(ms.sigma_e_psi.shape(), (20, 4));
    assert!(linalg::min_sym_eigenvalue(&ms.sigma_psi) >= -1e-12);
    assert!(ms.sigma_psi.diagonal().max() <= 1.0);
    for i in 0..ms.psi_mean.len() {
        assert!((ms.psi_mean[i]).abs() <= 4.0 * ms.stderr_psi_mean[i]);
    }
}

#[test]
fn beta_matches_half_normal_mean_for_scalar_plant() {
    let (a, w, v, n_r) = (1.0, 1.0, 1.0, 3);
    let spec = scalar_spec(a, 1.0, w, v, 3, 1.0);
    let gains = steady_state(&spec).unwrap();
    let dec = decompose(&spec).unwrap();
    let beta = estimate_beta(&spec, &gains, &dec, n_r, SAMPLES, 2).unwrap();
    let o = scalar_oracle(a, w, v);
    let var: f64 = (0..n_r)
        .map(|k| o.k * o.k * o.pred_var * a.powi(2 * (n_r - 1 - k) as i32))
        .sum();
    let expect = (var * 2.0 / std::f64::consts::PI).sqrt();
    assert!(
        within(beta.beta_hat, expect, beta.stderr),
        "{} vs {expect}",
        beta.beta_hat
    );
}

#[test]
fn beta_scales_with_noise_level_and_vanishes_without_noise() {
    let spec = SystemSpec::benchmark(1.0);
    let dec = decompose(&spec).unwrap();
    let base = estimate_beta(&spec, &steady_state(&spec).unwrap(), &dec, 3, 20_000, 3).unwrap();
    for s in [1e-4, 0.5, 3.0] {
        let mut scaled = spec.clone();
        scaled.sigma_x0 *= s * s;
        scaled.sigma_w *= s * s;
        scaled.sigma_v *= s * s;
        let b = estimate_beta(&scaled, &steady_state(&scaled).unwrap(), &dec, 3, 20_000, 3).unwrap();
        assert!((b.beta_hat - s * base.beta_hat).abs() <= 1e-9 * s * base.beta_hat);
    }
}

#[test]
fn beta_stderr_shrinks_with_more_samples() {
    let spec = SystemSpec::benchmark(1.0);
    let gains = steady_state(&spec).unwrap();
    let dec = decompose(&spec).unwrap();
    let small = estimate_beta(&spec, &gains, &dec, 3, 25_000, 4).unwrap();
    let large = estimate_beta(&spec, &gains, &dec, 3, 100_000, 4).unwrap();
    let ratio = large.stderr / small.stderr;
    assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    assert!((large.beta_hat - small.beta_hat).abs() < 4.0 * small.stderr);
}

#[test]
fn cache_roundtrip_and_rejections() {
    let spec = SystemSpec::benchmark(1.0);
    let gains = steady_state(&spec).unwrap();
    let stack = error_stack(&gains, &spec, spec.horizon);
    let ms = estimate_moments(&spec, &gains, &stack, &PsiSpec::sigmoid(), 2_000, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    write_cache(&ms, &path).unwrap();
    assert_eq!(read_cache(&path, Some(&ms.spec_digest)).unwrap(), ms);

    let err = read_cache(&path, Some("0000")).unwrap_err();
    assert!(matches!(err, Error::StaleCache { .. }));

    let mut bytes = encode_cache(&ms).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    assert!(matches!(decode_cache(&bytes), Err(Error::Checksum(_))));
    assert!(matches!(decode_cache(&bytes[..10]), Err(Error::Checksum(_))));
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let spec = SystemSpec::benchmark(1.0);
    let gains = steady_state(&spec).unwrap();
    let stack = error_stack(&gains, &spec, spec.horizon);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_moments(&spec, &gains, &stack, &PsiSpec::sigmoid(), 5_000, 6).unwrap())
    };
    assert_eq!(encode_cache(&run(1)).unwrap(), encode_cache(&run(4)).unwrap());
}
