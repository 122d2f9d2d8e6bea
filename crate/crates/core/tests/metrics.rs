mod common;

use common::*;
use imle_complete::geometry::PointCloud;
use imle_complete::metrics::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn emd_exact_matches_brute_force() {
    let mut rng = rng(1);
    for case in 0..200 {
        let n = 2 + case % 5;
        let d = 2 + case % 2;
        let a = random_cloud(&mut rng, n, d);
        let b = random_cloud(&mut rng, n, d);
        let exact = emd_exact(&a, &b).unwrap().cost;
        assert!(
            (exact - brute_force_emd(&a, &b)).abs() < 1e-9,
            "case {case}"
        );
    }
}

#[test]
fn emd_assignment_is_a_permutation_with_reported_cost() {
    let mut rng = rng(2);
    let a = random_cloud(&mut rng, 40, 3);
    let b = random_cloud(&mut rng, 40, 3);
    let m = emd_exact(&a, &b).unwrap();
    let mut seen = m.assignment.clone();
    seen.sort_unstable();
    assert_eq!(seen, (0..40).collect::<Vec<_>>());
    assert!((matching_cost(&a, &b, &m.assignment) - m.cost).abs() < 1e-12);
}

#[test]
fn emd_approx_within_five_percent_at_n32() {
    let mut rng = rng(3);
    for _ in 0..10 {
        let a = random_cloud(&mut rng, 32, 2);
        let b = random_cloud(&mut rng, 32, 2);
        let exact = emd_exact(&a, &b).unwrap().cost;
        let approx = emd_approx(&a, &b, DEFAULT_EMD_EPSILON, DEFAULT_EMD_MAX_ITERS).unwrap();
        assert!(approx.value >= exact - 1e-9);
        assert!(
            (approx.value - exact) / exact < 0.05,
            "{} vs {}",
            approx.value,
            exact
        );
    }
}

fn check_metric_gradient(metric: Metric, seed: u64, tol: f64) {
    let mut rng = rng(seed);
    for _ in 0..20 {
        let n = rng.random_range(4..10);
        let d = rng.random_range(2..4);
        let a = random_cloud(&mut rng, n, d);
        let b = random_cloud(&mut rng, n, d);
        let g = metric_gradient(metric, &a, &b).unwrap();
        let value = |x: &PointCloud<f64>, y: &PointCloud<f64>| {
            metric_with_gradient(metric, x, y).unwrap().value
        };
        let fa = finite_difference(a.coords(), 1e-5, |c| {
            value(&PointCloud::from_flat(d, c.to_vec()).unwrap(), &b)
        });
        let fb = finite_difference(b.coords(), 1e-5, |c| {
            value(&a, &PointCloud::from_flat(d, c.to_vec()).unwrap())
        });
        assert!(
            relative_error(&g.a, &fa) < tol,
            "{metric:?} a: {:?} vs {:?}",
            g.a,
            fa
        );
        assert!(
            relative_error(&g.b, &fb) < tol,
            "{metric:?} b: {:?} vs {:?}",
            g.b,
            fb
        );
    }
}

#[test]
fn emd_gradient_matches_finite_differences() {
    check_metric_gradient(Metric::EmdExact, 4, 1e-4);
}

#[test]
fn chamfer_gradient_matches_finite_differences() {
    check_metric_gradient(Metric::Chamfer, 5, 1e-4);
}

#[test]
fn uhd_gradient_matches_finite_differences() {
    check_metric_gradient(Metric::Uhd, 6, 1e-4);
}

fn cloud_strategy(n: std::ops::Range<usize>) -> impl Strategy<Value = PointCloud<f64>> {
    (n, 2usize..4).prop_flat_map(|(n, d)| {
        prop::collection::vec(-1.0f64..1.0, n * d)
            .prop_map(move |c| PointCloud::from_flat(d, c).unwrap())
    })
}

fn pair_strategy(
    n: std::ops::Range<usize>,
) -> impl Strategy<Value = (PointCloud<f64>, PointCloud<f64>)> {
    (n, 2usize..4).prop_flat_map(|(n, d)| {
        let side = move || {
            prop::collection::vec(-1.0f64..1.0, n * d)
                .prop_map(move |c| PointCloud::from_flat(d, c).unwrap())
        };
        (side(), side())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_is_exactly_symmetric((a, b) in pair_strategy(1..20)) {
        prop_assert_eq!(chamfer(&a, &b).unwrap().value, chamfer(&b, &a).unwrap().value);
    }

    #[test]
    fn uhd_of_subset_is_zero(c in cloud_strategy(2..20), keep in prop::collection::vec(any::<bool>(), 20)) {
        let mut idx: Vec<usize> = (0..c.len()).filter(|&i| keep[i]).collect();
        if idx.is_empty() {
            idx.push(0);
        }
        prop_assert_eq!(uhd(&c.select(&idx), &c).unwrap().value, 0.0);
    }

    #[test]
    fn tmd_of_identical_samples_is_zero(c in cloud_strategy(1..20), m in 2usize..6) {
        prop_assert_eq!(tmd(&vec![c; m]).unwrap().value, 0.0);
    }

    #[test]
    fn metrics_are_rotation_invariant((a, b) in pair_strategy(2..7), angle in 0.0f64..std::f64::consts::TAU) {
        let r = rotation(a.dim(), angle);
        let (ra, rb) = (a.transform_linear(&r).unwrap(), b.transform_linear(&r).unwrap());
        prop_assert!((emd_exact(&a, &b).unwrap().cost - emd_exact(&ra, &rb).unwrap().cost).abs() < 1e-9);
        prop_assert!((chamfer(&a, &b).unwrap().value - chamfer(&ra, &rb).unwrap().value).abs() < 1e-9);
        prop_assert!((uhd(&a, &b).unwrap().value - uhd(&ra, &rb).unwrap().value).abs() < 1e-9);
        let samples = [a.clone(), b.clone()];
        let rotated = [ra, rb];
        prop_assert!((tmd(&samples).unwrap().value - tmd(&rotated).unwrap().value).abs() < 1e-9);
    }

    #[test]
    fn emd_is_symmetric_and_bounded_by_identity((a, b) in pair_strategy(1..8)) {
        let ab = emd_exact(&a, &b).unwrap().cost;
        prop_assert!((ab - emd_exact(&b, &a).unwrap().cost).abs() < 1e-12);
        prop_assert!(ab <= matching_cost(&a, &b, &(0..a.len()).collect::<Vec<_>>()) + 1e-12);
        prop_assert_eq!(emd_exact(&a, &a).unwrap().cost, 0.0);
    }

    #[test]
    fn emd_ignores_point_order((a, b) in pair_strategy(2..8), shift in 0usize..8) {
        let order: Vec<usize> = (0..a.len()).map(|i| (i + shift) % a.len()).collect();
        let shuffled = a.select(&order);
        prop_assert!((emd_exact(&a, &b).unwrap().cost - emd_exact(&shuffled, &b).unwrap().cost).abs() < 1e-12);
    }

    #[test]
    fn tmd_ignores_sample_order(cs in prop::collection::vec(cloud_strategy(5..6), 3..5)) {
        let d = cs[0].dim();
        prop_assume!(cs.iter().all(|c| c.dim() == d));
        let mut reversed = cs.clone();
        reversed.reverse();
        prop_assert_eq!(tmd(&cs).unwrap().value, tmd(&reversed).unwrap().value);
    }
}
