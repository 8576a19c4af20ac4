//! Seed-randomized properties of the public optimizer and verification API.

use gncopt_core::chart::{random_factor, represent_tau};
use gncopt_core::optim::{step_gnc_momentum, step_riem_momentum, GncState, RiemMomentumState, StepConfig};
use gncopt_core::problems::{logdet_problem, SpdProblem};
use gncopt_core::rng::{random_spd_with_condition, stream};
use gncopt_core::verify::{equivalence_harness, CHECKS};
use gncopt_core::{Chart, ChartKind, EuclGrad, Exactness, FactorState, SpdPoint, TruncationMode};
use proptest::prelude::*;

fn min_eig(tau: &SpdPoint) -> f64 {
    tau.as_matrix().clone().symmetric_eigenvalues().min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Every equivalence check passes whatever the seed.
    #[test]
    fn equivalence_checks_hold_for_any_seed(seed in any::<u64>(), ix in 0usize..6) {
        let r = equivalence_harness(CHECKS[ix], seed).unwrap();
        prop_assert!(r.passed, "{} value {} threshold {}", r.name, r.value, r.threshold);
    }

    // GNC momentum iterates stay SPD and keep the chart structure on log-det.
    #[test]
    fn gnc_iterates_stay_spd(seed in any::<u64>(), ix in 0usize..4, k in 2usize..6) {
        let kind = [ChartKind::DenseSymA, ChartKind::DenseSymC, ChartKind::DenseSymB, ChartKind::TriangularA][ix];
        let mut rng = stream(seed, 1);
        let problem = logdet_problem(random_spd_with_condition(&mut rng, k, 20.0));
        let cfg = StepConfig::new(0.01, 0.5, TruncationMode::Quadratic).unwrap();
        let mut chart = Chart::new(kind, random_factor(kind, k, &mut rng)).unwrap();
        let mut state = GncState { w: None, exactness: Exactness::FirstOrder };
        let start = problem.loss(&represent_tau(chart.reference()).unwrap());
        for _ in 0..200 {
            chart = step_gnc_momentum(&mut state, &chart, &problem, &cfg).unwrap();
            let tau = represent_tau(chart.reference()).unwrap();
            prop_assert!(min_eig(&tau) > 0.0);
            if let FactorState::LowerA(l) = chart.reference() {
                let m = l.as_matrix();
                prop_assert!((0..k).all(|i| (i + 1..k).all(|j| m[(i, j)] == 0.0)));
            }
        }
        let end = problem.loss(&represent_tau(chart.reference()).unwrap());
        prop_assert!(end < start);
    }

    // Momentum with zero weight on a zero gradient does not move.
    #[test]
    fn riemannian_momentum_zero_gradient_is_fixed(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = stream(seed, 2);
        let tau = random_spd_with_condition(&mut rng, k, 10.0);
        let mut st = RiemMomentumState::default();
        let cfg = StepConfig::new(0.1, 0.9, TruncationMode::Exact).unwrap();
        let next = step_riem_momentum(&mut st, &tau, &EuclGrad::zeros(k), &cfg).unwrap();
        prop_assert!((next.as_matrix() - tau.as_matrix()).amax() < 1e-12);
    }
}
