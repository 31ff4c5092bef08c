use gcfrft::graph::{knn_graph, path_graph, WeightMode};
use gcfrft::harness::random_points;
use gcfrft::linalg::{relative_diff, unitarity_defect, CMatrix};
use gcfrft::operators::{dfrft_matrix, eigendecompose, graph_frft, DfrftMode};
use gcfrft::transforms::{Family, Orders, PlanContext};
use num_complex::Complex64;
use proptest::prelude::*;

fn ctx(n1: usize, n2: usize, seed: u64) -> PlanContext {
    let g1 = knn_graph(&random_points(n1, seed), 2.min(n1 - 1), WeightMode::Unit).unwrap();
    PlanContext::new(&g1, &path_graph(n2).unwrap()).unwrap()
}

fn signal(n1: usize, n2: usize, values: &[f64]) -> CMatrix {
    CMatrix::from_fn(n1, n2, |i, j| {
        let k = 2 * (i * n2 + j);
        Complex64::new(values[k % values.len()], values[(k + 1) % values.len()])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_fractional_powers_are_unitary_and_additive(n in 2usize..20, seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = knn_graph(&random_points(n, seed), 2.min(n - 1), WeightMode::Unit).unwrap();
        let basis = eigendecompose(&g).unwrap();
        let fa = graph_frft(&basis, a).unwrap();
        let fb = graph_frft(&basis, b).unwrap();
        prop_assert!(unitarity_defect(fa.matrix()) <= 1e-9 * n as f64);
        let sum = graph_frft(&basis, a + b).unwrap();
        prop_assert!((fa.matrix() * fb.matrix() - sum.matrix()).norm() <= 1e-8 * n as f64);
    }

    #[test]
    fn dfrft_is_unitary_and_additive(n in 2usize..24, a in -2.0f64..2.0, b in -2.0f64..2.0, shifted in any::<bool>()) {
        let mode = if shifted { DfrftMode::PrincipalShifted } else { DfrftMode::Candan };
        let fa = dfrft_matrix(n, a, mode).unwrap();
        let fb = dfrft_matrix(n, b, mode).unwrap();
        prop_assert!(unitarity_defect(fa.matrix()) <= 1e-9 * n as f64);
        let sum = dfrft_matrix(n, a + b, mode).unwrap();
        prop_assert!((fa.matrix() * fb.matrix() - sum.matrix()).norm() <= 1e-8 * n as f64);
    }

    #[test]
    fn every_family_round_trips_and_preserves_energy(
        n1 in 2usize..10,
        n2 in 3usize..9,
        seed in 0u64..1000,
        a in -1.5f64..1.5,
        b in -0.9f64..0.9,
        lambda in 0.0f64..=1.0,
        values in prop::collection::vec(-1.0f64..1.0, 8..32),
    ) {
        let c = ctx(n1, n2, seed);
        let x = signal(n1, n2, &values);
        prop_assume!(x.norm() > 1e-6);
        for family in Family::ALL {
            let (orders, l) = match family {
                Family::Gfrft2d => (Orders::Shared(a), None),
                Family::Gcgfrft => (Orders::pair(a, b), Some(lambda)),
                _ => (Orders::pair(a, b), None),
            };
            let plan = match c.make_plan(family, orders, l) {
                Ok(p) => p,
                Err(e) if e.is_assumption_violation() => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let y = plan.forward_matrix(&x).unwrap();
            prop_assert!((y.norm() - x.norm()).abs() <= 1e-9 * x.norm());
            prop_assert!(relative_diff(&plan.inverse_matrix(&y).unwrap(), &x) <= 1e-8);
        }
    }

    #[test]
    fn coupled_family_hits_both_endpoints(n1 in 2usize..8, n2 in 3usize..9, seed in 0u64..1000, a in -1.0f64..1.0, b in -0.9f64..0.9) {
        let c = ctx(n1, n2, seed);
        let x = signal(n1, n2, &[0.3, -0.7, 0.2, 0.9, -0.1]);
        let f = |fam, o, l| c.make_plan(fam, o, l).map(|p| p.forward_matrix(&x).unwrap());
        let Ok(gc0) = f(Family::Gcgfrft, Orders::pair(a, b), Some(0.0)) else { return Ok(()) };
        let gc1 = f(Family::Gcgfrft, Orders::pair(a, b), Some(1.0)).unwrap();
        prop_assert!(relative_diff(&gc0, &f(Family::Gbfrft2d, Orders::pair(a, b), None).unwrap()) <= 1e-8);
        prop_assert!(relative_diff(&gc1, &f(Family::Jfrft, Orders::pair(a, b), None).unwrap()) <= 1e-8);
    }
}
