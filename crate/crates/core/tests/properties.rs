mod common;

use alphacross_core::covariance::sample_covariance;
use alphacross_core::impact::{find_capacity, optimized_pnl, solve_with_impact, CapacityOptions};
use alphacross_core::optimizer::{verify_global_optimum, verify_with_covariance};
use alphacross_core::oracle::{brute_force_solve, numeric_descent_check};
use alphacross_core::regression::{factor_exposure, regression_with_costs, RegressionSpec};
use alphacross_core::{
    solve_linear_cost, solve_with_rho_star_loop, validate_alpha_set, AlphaSet, AlphaSetCandidate, Allocation,
    CostSpec, Error, FactorModel, PcaSource, Provenance, SolveOptions,
};
use common::{max_abs_diff, normal, random_instance, rng, Instance};
use nalgebra::DMatrix;
use rand::RngExt;

fn as_allocation(weights: &[f64], lambda: f64) -> Allocation {
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    let signs = weights
        .iter()
        .map(|&w| if w > 0.0 { 1 } else if w < 0.0 { -1 } else { 0 })
        .collect();
    Allocation {
        weights: weights.iter().map(|w| w / l1).collect(),
        signs,
        active: vec![],
        inactive: vec![],
        lambda: lambda * l1,
        rho_star: None,
        effective_costs: vec![],
        diagnostics: Default::default(),
    }
}

#[test]
fn oracle_optimum_is_certified_and_unique() {
    let mut r = rng(101);
    let mut checked = 0;
    while checked < 200 {
        let n = r.random_range(2..=5);
        let f = r.random_range(0..=2);
        let Instance { alphas, fm, .. } = random_instance(&mut r, n, f);
        // strictly positive costs
        let costs: Vec<f64> = alphas.iter().map(|a| r.random_range(0.05..1.0) * a.abs()).collect();
        let cov = fm.implied_covariance();
        let Ok(o) = brute_force_solve(&alphas, &cov, &costs, 1.0) else {
            continue;
        };
        assert_eq!(o.patterns_examined, 3usize.pow(n as u32));
        assert_eq!(o.feasible.len(), 1, "more than one feasible pattern: {:?}", o.feasible);
        let d = numeric_descent_check(&alphas, &cov, &costs, 1.0, &o.weights, checked);
        assert!(d.worst_violation >= -1e-12);
        let alloc = as_allocation(&o.weights, 1.0);
        assert!(verify_with_covariance(&alloc, &cov, &alphas, &costs, alloc.lambda, 1e-9).passed);
        checked += 1;
    }
}

#[test]
fn solver_matches_oracle_on_five_streams() {
    let mut r = rng(102);
    for _ in 0..100 {
        let Instance { alphas, fm, costs } = random_instance(&mut r, 5, 2);
        let cov = fm.implied_covariance();
        match (
            solve_linear_cost(&alphas, &fm, &costs, &SolveOptions::default()),
            brute_force_solve(&alphas, &cov, &costs, 1.0),
        ) {
            (Ok(a), Ok(o)) => {
                assert!((a.diagnostics.objective - o.objective).abs() < 1e-10);
                assert!(verify_global_optimum(&a, &fm, &alphas, &costs, a.lambda, 1e-9).passed);
            }
            (Err(Error::AllAlphasKilled), Err(Error::NoFeasiblePattern)) => {}
            (x, y) => panic!("{x:?} vs {y:?}"),
        }
    }
}

fn history_from(fm: &FactorModel, m: usize, seed: u64) -> Vec<Vec<Option<f64>>> {
    let mut r = rng(seed);
    let n = fm.num_streams();
    (0..m)
        .map(|_| {
            let factors: Vec<f64> = (0..fm.num_factors()).map(|_| normal(&mut r)).collect();
            (0..n)
                .map(|i| {
                    let common: f64 = (0..fm.num_factors()).map(|a| fm.loadings()[(i, a)] * factors[a]).sum();
                    Some(common + fm.specific_var()[i].sqrt() * normal(&mut r))
                })
                .collect()
        })
        .collect()
}

fn alpha_set(fm: &FactorModel, alphas: Vec<f64>, turnovers: Vec<f64>, m: usize) -> AlphaSet {
    let n = alphas.len();
    validate_alpha_set(AlphaSetCandidate {
        labels: (0..n).map(|i| format!("s{i}")).collect(),
        history: history_from(fm, m, 7),
        turnovers,
        alphas: Some(alphas),
    })
    .unwrap()
}

#[test]
fn outer_loop_single_round_when_nothing_is_dropped() {
    let fm = FactorModel::new(vec![0.01; 3], DMatrix::from_element(3, 1, 0.05), Provenance::UserSupplied).unwrap();
    let set = alpha_set(&fm, vec![0.05, 0.06, 0.055], vec![1.0; 3], 300);
    let a = solve_with_rho_star_loop(&set, &fm, &CostSpec::linear(0.001), &SolveOptions::default()).unwrap();
    assert_eq!(a.diagnostics.outer_rounds, 1);
    assert_eq!(a.active, vec![0, 1, 2]);
    let killed = solve_with_rho_star_loop(&set, &fm, &CostSpec::linear(10.0), &SolveOptions::default());
    assert_eq!(killed.unwrap_err(), Error::AllAlphasKilled);
}

#[test]
fn outer_loop_with_pca_source_reaches_fixed_point() {
    let mut r = rng(103);
    let n = 12;
    let loadings = DMatrix::from_fn(n, 2, |_, _| 0.04 * normal(&mut r));
    let truth = FactorModel::new(vec![0.002; n], loadings, Provenance::UserSupplied).unwrap();
    let alphas: Vec<f64> = (0..n).map(|_| 0.02 * normal(&mut r)).collect();
    let set = alpha_set(&truth, alphas, (0..n).map(|_| r.random_range(0.2..1.0)).collect(), 250);
    let cov = sample_covariance(set.history()).unwrap();
    let source = PcaSource {
        cov,
        num_factors: Some(2),
    };
    let a = solve_with_rho_star_loop(&set, &source, &CostSpec::linear(0.02), &SolveOptions::default()).unwrap();
    assert!(a.diagnostics.outer_rounds >= 1);
    assert_eq!(a.diagnostics.rho_star_history.len(), a.diagnostics.outer_rounds);
    let l1: f64 = a.weights.iter().map(|w| w.abs()).sum();
    assert!((l1 - 1.0).abs() < 1e-12);
}

#[test]
fn regression_with_costs_on_singular_sample_covariance() {
    let mut r = rng(104);
    let (n, m) = (20, 4);
    let history: Vec<Vec<Option<f64>>> = (0..m).map(|_| (0..n).map(|_| Some(normal(&mut r))).collect()).collect();
    let set = validate_alpha_set(AlphaSetCandidate {
        labels: (0..n).map(|i| format!("s{i}")).collect(),
        history,
        turnovers: vec![1.0; n],
        alphas: None,
    })
    .unwrap();
    let cov = sample_covariance(set.history()).unwrap();
    assert_eq!(cov.rank_estimate, m - 1);
    let fm = alphacross_core::covariance::pca_factor_model(&cov, cov.rank_estimate).unwrap();
    let spec = RegressionSpec::from_factor_model(&fm).unwrap();
    let costs = vec![0.3; n];
    let a = regression_with_costs(set.alphas(), &spec, &costs, &SolveOptions::default()).unwrap();
    let b = regression_with_costs(
        set.alphas(),
        &spec,
        &costs,
        &SolveOptions {
            line_search: false,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.signs, b.signs);
    assert!(max_abs_diff(&a.weights, &b.weights) < 1e-12);
    assert!(factor_exposure(&a.weights, &spec) < 1e-10);
    assert!(a.diagnostics.min_cost_slack.is_none_or(|s| s >= 0.0));
}

#[test]
fn impact_surcharge_can_drop_a_stream() {
    let fm = FactorModel::diagonal(vec![0.01, 0.01, 0.01]).unwrap();
    let set = alpha_set(&fm, vec![0.05, 0.02, 0.04], vec![0.5, 1.5, 1.0], 100);
    let opts = SolveOptions {
        outer_loop: false,
        ..Default::default()
    };
    let linear = CostSpec {
        linear_coeff: 0.01,
        rho_star_override: Some(1.0),
        ..Default::default()
    };
    let base = solve_with_impact(&set, &fm, &linear, &opts).unwrap();
    assert_eq!(base.allocation.active, vec![0, 1, 2]);
    // stream 1 survives L_1 = 0.015 but not L_1 plus the impact surcharge 0.001 * 5 * 1.5
    let impact = CostSpec {
        impact_coeff: 0.001,
        impact_exponent: 2.0,
        investment: 5.0,
        ..linear
    };
    let with = solve_with_impact(&set, &fm, &impact, &opts).unwrap();
    assert_eq!(with.allocation.active, vec![0, 2]);
    assert!(with.pnl.impact_cost_approx.is_some());
    assert!(with.spec.effective_costs[1] > set.alphas()[1]);
}

#[test]
fn capacity_is_a_local_maximum_of_the_curve() {
    let mut r = rng(105);
    let n = 6;
    let fm = FactorModel::new(
        vec![0.004; n],
        DMatrix::from_fn(n, 1, |_, _| 0.03 * normal(&mut r)),
        Provenance::UserSupplied,
    )
    .unwrap();
    let alphas: Vec<f64> = (0..n).map(|_| 0.03 * normal(&mut r)).collect();
    let set = alpha_set(&fm, alphas, (0..n).map(|_| r.random_range(0.5..1.0)).collect(), 200);
    let cs = CostSpec {
        linear_coeff: 0.002,
        impact_coeff: 1e-3,
        impact_exponent: 1.5,
        investment: 1.0,
        rho_star_override: None,
    };
    let opts = SolveOptions::default();
    let res = find_capacity(&set, &fm, &cs, &opts, &CapacityOptions::default()).unwrap();
    assert!(res.capacity > 1.0 && res.capacity < 1e10, "{}", res.capacity);
    assert!(res.pnl_at_capacity > 0.0);
    for d in [-0.01, 0.01] {
        let p = optimized_pnl(&set, &fm, &cs, &opts, res.capacity * (1.0 + d)).unwrap();
        assert!(p <= res.pnl_at_capacity + 1e-9 * res.pnl_at_capacity.abs(), "{p} vs {}", res.pnl_at_capacity);
    }
    assert!(res.curve.windows(2).all(|w| w[0].0 < w[1].0));
}
