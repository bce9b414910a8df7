mod common;

use common::{active_set_oracle, planted_qp, random_qp};
use ofspc::qpsolver::{kkt_residuals, solve};
use ofspc::{Mat, QpProblem, QpSettings, QpStatus, Vector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AGREEMENT_TOL: f64 = 1e-5;

#[test]
fn matches_active_set_enumeration_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let settings = QpSettings::default();
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (prob, planted) = planted_qp(&mut rng);
        let (x_star, _) = active_set_oracle(&prob).expect("oracle found no KKT point");
        assert!(
            (&x_star - &planted).amax() < 1e-9,
            "case {case}: oracle disagrees with construction"
        );
        let sol = solve(&prob, &settings, None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved, "case {case}");
        let err = (&sol.z - &x_star).amax();
        worst = worst.max(err);
        assert!(err <= AGREEMENT_TOL, "case {case}: |z - z*| = {err:e}");
    }
    eprintln!("worst deviation from oracle: {worst:e}");
}

#[test]
fn solutions_satisfy_kkt_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let prob = random_qp(&mut rng);
        let sol = solve(&prob, &QpSettings::default(), None).unwrap();
        let r = kkt_residuals(&prob, &sol.z, &sol.dual);
        assert!(r.primal <= 1e-6 && r.dual <= 1e-6 && r.complementarity <= 1e-6, "{r:?}");
    }
}

#[test]
fn unpolished_admm_still_meets_tolerances() {
    let settings = QpSettings {
        polish: false,
        ..QpSettings::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let prob = random_qp(&mut rng);
        let (x_star, _) = active_set_oracle(&prob).unwrap();
        let sol = solve(&prob, &settings, None).unwrap();
        assert!(!sol.polished);
        assert!((&sol.z - &x_star).amax() < 1e-3);
    }
}

#[test]
fn equality_constrained_problem() {
    // min x^2 + y^2  s.t.  x + y = 1
    let prob = QpProblem {
        p: Mat::identity(2, 2) * 2.0,
        q: Vector::zeros(2),
        a: Mat::from_row_slice(1, 2, &[1.0, 1.0]),
        l: Vector::from_element(1, 1.0),
        u: Vector::from_element(1, 1.0),
    };
    let sol = solve(&prob, &QpSettings::default(), None).unwrap();
    assert!((sol.z[0] - 0.5).abs() < 1e-9 && (sol.z[1] - 0.5).abs() < 1e-9);
    assert!((sol.dual[0] + 1.0).abs() < 1e-8);
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let prob = QpProblem {
        p: Mat::identity(2, 2),
        q: Vector::zeros(3),
        a: Mat::zeros(1, 2),
        l: Vector::zeros(1),
        u: Vector::zeros(1),
    };
    assert!(solve(&prob, &QpSettings::default(), None).is_err());
}

fn arb_qp() -> impl Strategy<Value = QpProblem> {
    any::<u64>().prop_map(|seed| random_qp(&mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_scaling_leaves_minimizer_unchanged(prob in arb_qp(), s in 0.01f64..100.0) {
        let settings = QpSettings::default();
        let base = solve(&prob, &settings, None).unwrap();
        let scaled = QpProblem { p: &prob.p * s, q: &prob.q * s, ..prob.clone() };
        let other = solve(&scaled, &settings, None).unwrap();
        prop_assert!((&base.z - &other.z).amax() <= 1e-5);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical(prob in arb_qp()) {
        let settings = QpSettings::default();
        let a = solve(&prob, &settings, None).unwrap();
        let b = solve(&prob, &settings, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn never_worse_than_a_feasible_warm_start(prob in arb_qp(), seed in any::<u64>()) {
        // the oracle gives a feasible point; perturb it inside the box to get a feasible warm start
        let (x_star, _) = active_set_oracle(&prob).unwrap();
        let warm = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dir = Vector::from_fn(x_star.len(), |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            let mut t = 1.0;
            let mut cand = &x_star + &dir * t;
            while t > 1e-12 {
                let ax = &prob.a * &cand;
                if (0..ax.len()).all(|i| ax[i] >= prob.l[i] && ax[i] <= prob.u[i]) { break; }
                t *= 0.5;
                cand = &x_star + &dir * t;
            }
            cand
        };
        let sol = solve(&prob, &QpSettings::default(), Some(&warm)).unwrap();
        let tol = 1e-6 * (1.0 + prob.objective(&warm).abs());
        prop_assert!(prob.objective(&sol.z) <= prob.objective(&warm) + tol);
    }
}
