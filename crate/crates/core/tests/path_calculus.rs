use std::sync::Arc;

use dbsde_core::path_calculus::{
    delayed_segment, modulus_of_continuity, step_approximation_error, stieltjes_cumulative, stieltjes_integral,
    total_variation, variation_slice, BvFunction, EvalPoint, GridFunction, SegmentKind, TimeGrid,
};
use proptest::prelude::*;

/// Strictly increasing grid on `[0, T]` built from positive step weights.
fn grid_from(weights: &[f64], horizon: f64) -> Arc<TimeGrid> {
    let total: f64 = weights.iter().sum();
    let mut pts = vec![0.0];
    let mut acc = 0.0;
    for w in &weights[..weights.len() - 1] {
        acc += w;
        pts.push(horizon * acc / total);
    }
    pts.push(horizon);
    TimeGrid::from_points(pts).unwrap().into_shared()
}

fn setup() -> impl Strategy<Value = (Arc<TimeGrid>, Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..1.0, n),
            prop::collection::vec(-3.0f64..3.0, n + 1),
            prop::collection::vec(-3.0f64..3.0, n + 1),
        )
            .prop_map(|(w, x, e)| (grid_from(&w, 1.0), x, e))
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn integral_is_additive_over_intervals((grid, x, e) in setup(), i in 0usize..100, j in 0usize..100) {
        let n = grid.n_steps();
        let (mut a, mut b) = (i % (n + 1), j % (n + 1));
        if a > b { std::mem::swap(&mut a, &mut b); }
        let xf = GridFunction::scalar(grid.clone(), x).unwrap();
        let ef = BvFunction::linear(GridFunction::scalar(grid.clone(), e).unwrap());
        let whole = stieltjes_integral(&xf, &ef, 0.0, 1.0).unwrap();
        let parts = stieltjes_integral(&xf, &ef, 0.0, grid.t(a)).unwrap()
            + stieltjes_integral(&xf, &ef, grid.t(a), grid.t(b)).unwrap()
            + stieltjes_integral(&xf, &ef, grid.t(b), 1.0).unwrap();
        prop_assert!(close(whole, parts));
    }

    #[test]
    fn integral_is_bilinear((grid, x, e) in setup(), k in -2.0f64..2.0) {
        let x2: Vec<f64> = x.iter().rev().cloned().collect();
        let e2: Vec<f64> = e.iter().map(|v| v * v).collect();
        let g = |v: &[f64]| GridFunction::scalar(grid.clone(), v.to_vec()).unwrap();
        let int = |x: &[f64], e: &[f64]| stieltjes_integral(&g(x), &BvFunction::linear(g(e)), 0.0, 1.0).unwrap();
        let xs: Vec<f64> = x.iter().zip(&x2).map(|(a, b)| k * a + b).collect();
        prop_assert!(close(int(&xs, &e), k * int(&x, &e) + int(&x2, &e)));
        let es: Vec<f64> = e.iter().zip(&e2).map(|(a, b)| k * a + b).collect();
        prop_assert!(close(int(&x, &es), k * int(&x, &e) + int(&x, &e2)));
    }

    #[test]
    fn integral_bounded_by_sup_times_variation((grid, x, e) in setup()) {
        let xf = GridFunction::scalar(grid.clone(), x).unwrap();
        let ef = BvFunction::linear(GridFunction::scalar(grid.clone(), e).unwrap());
        for rule in [EvalPoint::Left, EvalPoint::Midpoint] {
            let cum = stieltjes_cumulative(&xf, &ef, rule).unwrap();
            let bound = xf.sup_norm() * ef.variation();
            prop_assert!(cum.iter().all(|v| v.abs() <= bound * (1.0 + 1e-12) + 1e-12));
        }
    }

    #[test]
    fn variation_is_additive_and_monotone((grid, _x, e) in setup(), i in 0usize..100, j in 0usize..100) {
        let n = grid.n_steps();
        let (mut a, mut b) = (i % (n + 1), j % (n + 1));
        if a > b { std::mem::swap(&mut a, &mut b); }
        let ef = BvFunction::linear(GridFunction::scalar(grid.clone(), e).unwrap());
        let v = |s: usize, t: usize| total_variation(&ef, grid.t(s), grid.t(t)).unwrap();
        prop_assert!(close(v(0, n), v(0, a) + v(a, b) + v(b, n)));
        prop_assert!(v(a, b) <= v(0, n) + 1e-12);
        prop_assert!(v(0, a) <= v(0, b) + 1e-12);
    }

    #[test]
    fn refining_the_partition_never_lowers_variation((grid, _x, e) in setup(), keep in prop::collection::vec(any::<bool>(), 40)) {
        let n = grid.n_steps();
        let nodes: Vec<usize> = (0..=n).filter(|&k| k == 0 || k == n || keep[k % keep.len()]).collect();
        let coarse: Vec<f64> = nodes.iter().map(|&k| e[k]).collect();
        let fine = variation_slice(&e, 1, 0, n);
        prop_assert!(variation_slice(&coarse, 1, 0, coarse.len() - 1) <= fine + 1e-12);
    }

    #[test]
    fn step_error_within_modulus((grid, x, _e) in setup(), keep in prop::collection::vec(any::<bool>(), 40)) {
        let n = grid.n_steps();
        let pts: Vec<f64> = (0..=n).filter(|&k| k == 0 || k == n || keep[k % keep.len()]).map(|k| grid.t(k)).collect();
        let part = TimeGrid::from_points(pts).unwrap();
        let xf = GridFunction::scalar(grid.clone(), x).unwrap();
        let err = step_approximation_error(&xf, &part).unwrap();
        prop_assert!(err <= modulus_of_continuity(&xf, part.mesh()) + 1e-12);
    }

    #[test]
    fn segment_at_zero_lag_is_current_value(x in prop::collection::vec(-3.0f64..3.0, 21), node in 0usize..21) {
        let grid = TimeGrid::uniform_with_delay(1.0, 20, 0.25).unwrap().into_shared();
        let xf = GridFunction::scalar(grid.clone(), x.clone()).unwrap();
        for kind in [SegmentKind::StateLike, SegmentKind::ControlLike] {
            let s = delayed_segment(&xf, grid.t(node), kind).unwrap();
            prop_assert_eq!(*s.theta.last().unwrap(), 0.0);
            prop_assert_eq!(s.at(s.theta.len() - 1)[0], x[node]);
        }
    }
}

#[test]
fn left_sums_match_discrete_square_identity() {
    // int_0^1 x dx with left sums = (x(1)^2 - x(0)^2 - sum dx^2) / 2
    let grid = TimeGrid::uniform(1.0, 1000).unwrap().into_shared();
    let x = GridFunction::from_fn(grid.clone(), |t| (17.0 * t).sin() + t * t);
    let eta = BvFunction::linear(x.clone());
    let got = stieltjes_integral(&x, &eta, 0.0, 1.0).unwrap();
    let v = x.values();
    let qv: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let want = 0.5 * (v[1000] * v[1000] - v[0] * v[0] - qv);
    assert!((got - want).abs() < 1e-12);
}
