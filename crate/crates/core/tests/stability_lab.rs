use std::f64::consts::PI;

use dbsde_core::path_calculus::{helly_bray_distance, BvFunction, GridFunction, TimeGrid};
use dbsde_core::registry::Registry;
use dbsde_core::stability_lab::sequences::{
    GaussianScaledSeq, OscillatingCosSeq, OscillatorySeq, TimeSeq, WildOscillationSeq, ZeroSeq,
};
use dbsde_core::stability_lab::{
    helly_bray_stochastic_check, run_stability, tail_curve, FamilyConfig, HellyBrayVerdict, PerturbationFamily,
    StabilityOptions,
};
use dbsde_core::Error;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

fn family(base_overrides: Value, generate: Value) -> FamilyConfig {
    let mut base = json!({
        "horizon": 1.0,
        "delay": 0.125,
        "terminal": {"kind": "zero"},
        "driver_f": {"kind": "zero"},
        "driver_g": {"kind": "zero"},
        "increasing_process": {"kind": "linear"},
        "constants": {"beta": 2.0, "lipschitz": 0.5, "lipschitz_g": 0.5, "c": 0.001}
    });
    for (k, v) in base_overrides.as_object().unwrap() {
        base[k] = v.clone();
    }
    serde_json::from_value(json!({"base": base, "generate": generate})).unwrap()
}

#[test]
fn identical_members_have_negligible_error() {
    let cfg = family(
        json!({"terminal": {"kind": "affine", "params": {"w": 1.0}}, "driver_f": {"kind": "linear", "params": {"a": 0.2}}}),
        json!({"kind": "identical", "ns": [1, 2, 4]}),
    );
    let fam = PerturbationFamily::build(&cfg, &Registry::default(), 32).unwrap();
    let rep = run_stability(&fam, 2000, 7, &StabilityOptions::default()).unwrap();
    for r in &rep.rows {
        assert!(r.error <= 1e-3 * rep.base_norm, "{r:?}");
        assert_eq!(r.delta_xi, 0.0);
        assert_eq!(r.delta_f, 0.0);
    }
    assert!(rep.pass);
}

#[test]
fn terminal_shift_gives_inverse_square_error() {
    let cfg = family(json!({}), json!({"kind": "xi-shift", "ns": [1, 2, 4, 8]}));
    let fam = PerturbationFamily::build(&cfg, &Registry::default(), 16).unwrap();
    let rep = run_stability(&fam, 500, 3, &StabilityOptions { threshold: 0.02, ..Default::default() }).unwrap();
    for r in &rep.rows {
        // Y_n - Y = 1/n exactly, Z_n = Z = 0
        assert!((r.error - 1.0 / (r.n * r.n)).abs() < 1e-12, "{r:?}");
        assert!((r.delta_xi - (1.0 / r.n).powi(4)).abs() < 1e-12);
    }
    assert!(rep.spearman.unwrap() < 0.0);
    assert!(rep.pass);
}

#[test]
fn oscillatory_integrator_converges_uniformly_not_in_variation() {
    let cfg = family(
        json!({"driver_g": {"kind": "constant", "params": {"value": 1.0}}}),
        json!({"kind": "oscillatory-a", "ns": [1, 2, 4, 8, 16]}),
    );
    let fam = PerturbationFamily::build(&cfg, &Registry::default(), 512).unwrap();
    let rep = run_stability(&fam, 200, 3, &StabilityOptions::default()).unwrap();
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    for r in &rep.rows {
        let osc: Vec<f64> = grid.points().iter().map(|&t| (2.0 * PI * r.n * t).sin() / (4.0 * PI * r.n)).collect();
        let sup = osc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Y_n - Y = osc(t) - osc(1), osc(1) = 0 up to rounding
        assert!((r.error - sup * sup).abs() < 1e-12, "{r:?}");
        assert!((r.sup_a_diff - sup).abs() < 1e-12);
        assert!((r.sup_a_diff - 1.0 / (4.0 * PI * r.n)).abs() < 1e-3 / r.n);
        assert!(r.bv_h >= 0.9 / PI && r.bv_h <= 1.1 / PI, "{r:?}");
    }
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn failing_member_is_named() {
    let mut cfg = family(json!({}), json!({"kind": "identical", "ns": [1, 3]}));
    cfg.members.push(serde_json::from_value(json!({"n": 2, "k": 1000.0})).unwrap());
    let fam = PerturbationFamily::build(&cfg, &Registry::default(), 16).unwrap();
    let err = run_stability(&fam, 100, 1, &StabilityOptions::default()).unwrap_err();
    match err {
        Error::FamilyInvalid { member, reason } => {
            assert_eq!(member, "n = 2");
            assert!(reason.contains("H1"), "{reason}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn metric_is_symmetric() {
    let cfg = family(json!({}), json!({"kind": "xi-shift", "ns": [3]}));
    let fam = PerturbationFamily::build(&cfg, &Registry::default(), 16).unwrap();
    let base_ens = fam.base.simulate(300, 2).unwrap();
    let (_, member) = &fam.members[0];
    let ens = dbsde_core::stability_lab::coupled_ensemble(member, &base_ens).unwrap();
    let opts = dbsde_core::picard_solver::SolveOptions::default();
    let a = dbsde_core::picard_solver::solve(&fam.base, &base_ens, &opts).unwrap();
    let b = dbsde_core::picard_solver::solve(member, &ens, &opts).unwrap();
    let e1 = dbsde_core::stability_lab::error_metric(&a.pair, &b.pair).unwrap();
    let e2 = dbsde_core::stability_lab::error_metric(&b.pair, &a.pair).unwrap();
    assert!((e1 - e2).abs() <= 1e-6 * e1.max(1e-300));
}

#[test]
fn deterministic_check_reduces_to_path_distance() {
    let grid = TimeGrid::uniform(1.0, 400).unwrap().into_shared();
    let ns = [1.0, 2.0, 4.0, 8.0];
    let rep = helly_bray_stochastic_check(
        &TimeSeq,
        &OscillatorySeq,
        &ns,
        grid.clone(),
        4,
        1,
        1,
        &[0.5],
        &[0.5, 1.0, 2.0],
        0.02,
    )
    .unwrap();
    let x = GridFunction::from_fn(grid.clone(), |t| t);
    let eta = BvFunction::linear(GridFunction::from_fn(grid.clone(), |t| t));
    let xs: Vec<GridFunction> = ns.iter().map(|_| x.clone()).collect();
    let etas: Vec<BvFunction> = ns
        .iter()
        .map(|&n| BvFunction::linear(GridFunction::from_fn(grid.clone(), move |t| t + (2.0 * PI * n * t).sin() / (4.0 * PI * n))))
        .collect();
    let oracle = helly_bray_distance(&xs, &etas, &x, &eta).unwrap();
    for ((_, got), want) in rep.coupled_sup.iter().zip(&oracle) {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
    // phi distance decays like 1/n
    let phis: Vec<f64> = rep.rows.iter().map(|r| r.phi_distance).collect();
    for (k, &n) in ns.iter().enumerate() {
        assert!(phis[k] <= 0.2 / n, "{phis:?}");
    }
    assert!(rep.precondition);
}

#[test]
fn identical_sequences_have_zero_distance() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap().into_shared();
    let rep = helly_bray_stochastic_check(
        &dbsde_core::stability_lab::sequences::BrownianSeq { amplitude: 0.0 },
        &TimeSeq,
        &[1.0, 2.0],
        grid,
        500,
        1,
        9,
        &[0.1, 1.0],
        &[0.5, 2.0],
        0.02,
    )
    .unwrap();
    assert!(rep.rows.iter().all(|r| r.phi_distance == 0.0 && r.ks == 0.0));
    assert_eq!(rep.verdict, HellyBrayVerdict::Pass);
}

#[test]
fn unbounded_variation_is_inconclusive() {
    let grid = TimeGrid::uniform(1.0, 1 << 14).unwrap().into_shared();
    let nu: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
    let rep = helly_bray_stochastic_check(
        &OscillatingCosSeq { amplitude: 0.25 },
        &WildOscillationSeq { amplitude: 0.25 },
        &[1.0, 4.0, 16.0, 32.0],
        grid,
        2,
        1,
        1,
        &[0.5],
        &nu,
        0.02,
    )
    .unwrap();
    assert!(!rep.precondition);
    assert_eq!(rep.verdict, HellyBrayVerdict::Inconclusive);
    assert!(rep.tail_curve.iter().all(|&(_, f)| f == 1.0));
}

#[test]
fn tail_curve_shapes() {
    let grid = TimeGrid::uniform(1.0, 2048).unwrap().into_shared();
    let nu = [0.1, 0.3, 0.31, 0.32, 0.33, 0.5];
    let zero = helly_bray_stochastic_check(&TimeSeq, &ZeroSeq, &[1.0, 2.0], grid.clone(), 3, 1, 1, &[1.0], &nu, 0.02).unwrap();
    assert!(zero.tail_curve.iter().all(|&(_, f)| f == 0.0));

    // ||H_n - H||_BV = 1/pi for the pure oscillation
    let bv: Vec<Vec<f64>> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&n| {
            let h: Vec<f64> = grid.points().iter().map(|&t| (2.0 * PI * n * t).sin() / (4.0 * PI * n)).collect();
            vec![h.windows(2).map(|w| (w[1] - w[0]).abs()).sum()]
        })
        .collect();
    let curve = tail_curve(&bv, &nu);
    assert_eq!(curve.iter().map(|c| c.1).collect::<Vec<_>>(), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn gaussian_scaled_tail_within_binomial_band() {
    let grid = TimeGrid::uniform(1.0, 16).unwrap().into_shared();
    let n_paths = 20_000;
    let scale = 1.5;
    let nu = [0.5, 1.0, 2.0, 3.0];
    let rep = helly_bray_stochastic_check(
        &TimeSeq,
        &GaussianScaledSeq { scale },
        &[1.0],
        grid,
        n_paths,
        1,
        11,
        &[1.0],
        &nu,
        0.02,
    )
    .unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    for &(v, frac) in &rep.tail_curve {
        let p = 2.0 * (1.0 - normal.cdf(v / scale));
        let sd = (p * (1.0 - p) / n_paths as f64).sqrt();
        assert!((frac - p).abs() <= 4.0 * sd + 1e-12, "nu = {v}: {frac} vs {p}");
    }
}
