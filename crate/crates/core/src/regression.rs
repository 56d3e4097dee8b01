//! Optimization in the limit of vanishing specific risk, where optimal
//! weights become weighted cross-sectional regression residuals.
//!
//! With `C = zeta diag(v) + Lambda Lambda'` and `zeta -> 0`, the no-cost
//! weights tend to `w_i ~ eps_i / v_i`, where `eps` are the residuals of the
//! regression of `alpha` over `Lambda` with weights `1/v`. These weights carry
//! no factor exposure: `Lambda' w = 0`.
//!
//! With linear costs the same limit gives `w_i ~ soft(alpha_i - Lambda_i beta, L_i) / v_i`
//! where `beta` minimizes `sum_i (|alpha_i - Lambda_i beta| - L_i)_+^2 / (2 v_i)`.
//! On a fixed partition that is the regression of `alpha_i - L_i eta_i` over
//! the active rows of `Lambda`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::FactorModel;
use crate::error::{Error, Result};
use crate::linalg::{sign, spd_condition, spd_solve};
use crate::model::{Allocation, Diagnostics};
use crate::optimizer::{solve_linear_cost, SolveOptions};

/// Normal equations with a condition number above this are rank deficient.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Residual magnitude below this fraction of the regressand counts as an
/// exact fit.
const EXACT_FIT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    loadings: DMatrix<f64>,
    reg_weights: Vec<f64>,
}

impl RegressionSpec {
    pub fn new(loadings: DMatrix<f64>, reg_weights: Vec<f64>) -> Result<Self> {
        let n = reg_weights.len();
        if loadings.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "loadings have {} rows for {n} weights",
                loadings.nrows()
            )));
        }
        if loadings.ncols() > n {
            return Err(Error::RankDeficientLoadings {
                condition: f64::INFINITY,
            });
        }
        if let Some(i) = reg_weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidOption(format!("regression weight {i} must be positive")));
        }
        if loadings.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("loadings".into()));
        }
        let spec = RegressionSpec { loadings, reg_weights };
        let cond = spd_condition(&spec.normal_matrix(None));
        if cond > CONDITION_LIMIT {
            return Err(Error::RankDeficientLoadings { condition: cond });
        }
        Ok(spec)
    }

    /// Loadings `Omega~` and weights `1 / xi~^2` of a factor model.
    pub fn from_factor_model(fm: &FactorModel) -> Result<Self> {
        RegressionSpec::new(
            fm.loadings().clone(),
            fm.specific_var().iter().map(|v| 1.0 / v).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.reg_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reg_weights.is_empty()
    }

    pub fn num_factors(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn reg_weights(&self) -> &[f64] {
        &self.reg_weights
    }

    /// `sum_{i in rows} Lambda_i Lambda_i' / v_i`; all rows when `rows` is `None`.
    fn normal_matrix(&self, rows: Option<&[i8]>) -> DMatrix<f64> {
        let k = self.num_factors();
        let mut q = DMatrix::zeros(k, k);
        for i in 0..self.len() {
            if rows.is_some_and(|r| r[i] == 0) {
                continue;
            }
            let row = self.loadings.row(i);
            q += row.transpose() * row * self.reg_weights[i];
        }
        q
    }

    fn moment(&self, y: &[f64], rows: Option<&[i8]>) -> DVector<f64> {
        let mut b = DVector::zeros(self.num_factors());
        for i in 0..self.len() {
            if rows.is_some_and(|r| r[i] == 0) {
                continue;
            }
            b += self.loadings.row(i).transpose() * (self.reg_weights[i] * y[i]);
        }
        b
    }
}

/// Residuals `eps = y - Lambda eta` of the weighted regression of `y` over the
/// loadings, and the coefficients `eta`.
pub fn weighted_residuals(y: &[f64], spec: &RegressionSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != spec.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} regression rows",
            y.len(),
            spec.len()
        )));
    }
    let q = spec.normal_matrix(None);
    let eta = spd_solve(&q, &spec.moment(y, None)).map_err(|_| Error::RankDeficientLoadings {
        condition: f64::INFINITY,
    })?;
    let fit = &spec.loadings * &eta;
    let eps = (0..y.len()).map(|i| y[i] - fit[i]).collect();
    Ok((eps, eta.iter().copied().collect()))
}

/// Normalized regression-limit weights `w_i ~ eps_i / v_i`.
pub fn regression_limit_weights(alphas: &[f64], spec: &RegressionSpec) -> Result<Allocation> {
    let (eps, _) = weighted_residuals(alphas, spec)?;
    let scale = alphas.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    if eps.iter().all(|e| e.abs() <= EXACT_FIT * scale) {
        return Err(Error::AllZeroWeights);
    }
    let raw: Vec<f64> = eps.iter().zip(&spec.reg_weights).map(|(e, r)| e * r).collect();
    let diag = Diagnostics {
        inner_iterations: 1,
        ..Default::default()
    };
    let mut alloc = Allocation::from_raw(&raw, 1.0, vec![0.0; alphas.len()], diag)?;
    alloc.diagnostics.stationarity_residual = factor_exposure(&alloc.weights, spec);
    Ok(alloc)
}

/// Largest `|sum_i w_i Lambda_iC|` over factors.
pub fn factor_exposure(weights: &[f64], spec: &RegressionSpec) -> f64 {
    let w = DVector::from_column_slice(weights);
    let e = spec.loadings.transpose() * w;
    e.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

struct CostRegression<'a> {
    alphas: &'a [f64],
    costs: &'a [f64],
    spec: &'a RegressionSpec,
}

impl CostRegression<'_> {
    fn residuals(&self, beta: &DVector<f64>) -> Vec<f64> {
        let fit = &self.spec.loadings * beta;
        (0..self.alphas.len()).map(|i| self.alphas[i] - fit[i]).collect()
    }

    fn partition(&self, beta: &DVector<f64>) -> Vec<i8> {
        self.residuals(beta)
            .iter()
            .zip(self.costs)
            .map(|(&u, &l)| if u.abs() > l { sign(u) } else { 0 })
            .collect()
    }

    fn objective(&self, beta: &DVector<f64>) -> f64 {
        let u = self.residuals(beta);
        (0..u.len())
            .map(|i| {
                let e = (u[i].abs() - self.costs[i]).max(0.0);
                0.5 * self.spec.reg_weights[i] * e * e
            })
            .sum()
    }

    fn raw_weights(&self, beta: &DVector<f64>) -> Vec<f64> {
        let u = self.residuals(beta);
        (0..u.len())
            .map(|i| {
                let e = u[i].abs() - self.costs[i];
                if e > 0.0 {
                    sign(u[i]) as f64 * e * self.spec.reg_weights[i]
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        -(self.spec.loadings.transpose() * DVector::from_vec(self.raw_weights(beta)))
    }

    /// Coefficients of the regression of `alpha - L eta` over the active rows.
    /// A singular active system is solved in the least-norm sense.
    fn solve_partition(&self, signs: &[i8]) -> Result<DVector<f64>> {
        let y: Vec<f64> = (0..self.alphas.len())
            .map(|i| self.alphas[i] - self.costs[i] * signs[i] as f64)
            .collect();
        let q = self.spec.normal_matrix(Some(signs));
        let b = self.spec.moment(&y, Some(signs));
        if q.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        if spd_condition(&q) <= CONDITION_LIMIT {
            return spd_solve(&q, &b);
        }
        let scale = q.amax().max(f64::MIN_POSITIVE);
        q.svd(true, true)
            .solve(&b, 1e-12 * scale)
            .map_err(|_| Error::RankDeficientLoadings {
                condition: f64::INFINITY,
            })
    }
}

/// Regression-limit weights with linear costs.
pub fn regression_with_costs(
    alphas: &[f64],
    spec: &RegressionSpec,
    costs: &[f64],
    options: &SolveOptions,
) -> Result<Allocation> {
    options.validate()?;
    let n = spec.len();
    if alphas.len() != n || costs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} alphas and {} costs for {n} regression rows",
            alphas.len(),
            costs.len()
        )));
    }
    if let Some(i) = costs.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidCostSpec(format!("cost of stream {i} must be >= 0")));
    }
    if alphas.iter().zip(costs).all(|(a, l)| a.abs() <= *l) {
        return Err(Error::AllAlphasKilled);
    }
    let problem = CostRegression { alphas, costs, spec };
    let cap = options.max_iterations.unwrap_or(100 * n);
    let mut signs: Vec<i8> = alphas.iter().map(|&a| if a < 0.0 { -1 } else { 1 }).collect();
    let mut beta = problem.solve_partition(&signs)?;
    let mut exact = true;
    let mut seen = std::collections::HashSet::new();
    seen.insert(signs.clone());
    let mut diag = Diagnostics::default();
    let mut iteration = 1;
    loop {
        let next = problem.partition(&beta);
        if exact && next == signs {
            break;
        }
        if iteration >= cap {
            return Err(Error::MaxIterations { limit: cap });
        }
        let candidate = problem.solve_partition(&next)?;
        iteration += 1;
        let tol = options.v_tolerance * (1.0 + beta.norm());
        if exact && (&candidate - &beta).norm() <= tol {
            signs = next;
            beta = candidate;
            break;
        }
        let (accepted, full) = if options.line_search {
            backtrack(&problem, &beta, &candidate)
        } else {
            (candidate, true)
        };
        if !full {
            diag.damped_steps += 1;
        }
        signs = next;
        beta = accepted;
        exact = full;
        if full && !seen.insert(signs.clone()) {
            return Err(Error::CycleDetected {
                iteration,
                state: signs
                    .iter()
                    .map(|s| match s {
                        1 => '+',
                        -1 => '-',
                        _ => '0',
                    })
                    .collect(),
            });
        }
    }
    let u = problem.residuals(&beta);
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            if signs[i] == 0 {
                0.0
            } else {
                (u[i] - costs[i] * signs[i] as f64) * spec.reg_weights[i]
            }
        })
        .collect();
    diag.inner_iterations = iteration;
    diag.objective = problem.objective(&beta);
    let mut alloc = Allocation::from_raw(&raw, 1.0, costs.to_vec(), diag).map_err(|e| match e {
        Error::AllZeroWeights => Error::AllAlphasKilled,
        e => e,
    })?;
    alloc.diagnostics.stationarity_residual = factor_exposure(&alloc.weights, spec);
    let slack = alloc
        .inactive
        .iter()
        .map(|&j| costs[j] - u[j].abs())
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))));
    alloc.diagnostics.min_cost_slack = slack;
    Ok(alloc)
}

fn backtrack(problem: &CostRegression<'_>, beta: &DVector<f64>, candidate: &DVector<f64>) -> (DVector<f64>, bool) {
    let f0 = problem.objective(beta);
    let dir = candidate - beta;
    let slope = problem.gradient(beta).dot(&dir);
    let slack = 1e-13 * (1.0 + f0.abs());
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = beta + &dir * t;
        if problem.objective(&trial) <= f0 + 1e-4 * t * slope + slack {
            return (trial, t == 1.0);
        }
        t *= 0.5;
    }
    (candidate.clone(), true)
}

/// Unnormalized no-cost weights for `C = diag(v) + Lambda Lambda'` from the
/// explicit factor form
/// `w_i = (1/v_i) (alpha_i - Lambda_i Q^{-1} sum_j Lambda_j alpha_j / v_j)`,
/// `Q = I + sum_j Lambda_j Lambda_j' / v_j`. Equals `C^{-1} alpha`.
pub fn factor_form_weights(alphas: &[f64], specific_var: &[f64], loadings: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = alphas.len();
    if specific_var.len() != n || loadings.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} alphas, {} variances, {} loading rows",
            specific_var.len(),
            loadings.nrows()
        )));
    }
    if specific_var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidOption("specific variances must be positive".into()));
    }
    let k = loadings.ncols();
    let mut q = DMatrix::identity(k, k);
    let mut b = DVector::zeros(k);
    for j in 0..n {
        let row = loadings.row(j).transpose();
        q += &row * row.transpose() / specific_var[j];
        b += row * (alphas[j] / specific_var[j]);
    }
    let y = spd_solve(&q, &b)?;
    let proj = loadings * y;
    Ok((0..n).map(|i| (alphas[i] - proj[i]) / specific_var[i]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub zetas: Vec<f64>,
    /// Largest absolute difference of normalized weights per `zeta`.
    pub gaps: Vec<f64>,
    pub strictly_decreasing: bool,
    pub final_gap: f64,
}

pub const DEFAULT_ZETAS: [f64; 4] = [1.0, 1e-2, 1e-4, 1e-6];

fn check_zetas(zetas: &[f64]) -> Result<()> {
    if zetas.is_empty() || zetas.iter().any(|z| !(z.is_finite() && *z > 0.0)) || zetas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidOption("zeta sequence must be positive and strictly decreasing".into()));
    }
    Ok(())
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn report(zetas: &[f64], gaps: Vec<f64>) -> ConvergenceReport {
    ConvergenceReport {
        zetas: zetas.to_vec(),
        strictly_decreasing: gaps.windows(2).all(|w| w[1] < w[0]),
        final_gap: *gaps.last().unwrap_or(&f64::NAN),
        gaps,
    }
}

/// Solves the no-cost problem with specific variance scaled by each `zeta`
/// and measures the distance of its weights to the regression limit.
pub fn limit_consistency_check(alphas: &[f64], fm: &FactorModel, zetas: &[f64]) -> Result<ConvergenceReport> {
    check_zetas(zetas)?;
    let target = regression_limit_weights(alphas, &RegressionSpec::from_factor_model(fm)?)?;
    let zero = vec![0.0; alphas.len()];
    let mut gaps = Vec::with_capacity(zetas.len());
    for &z in zetas {
        let scaled = fm.scale_specific(z)?;
        let alloc = solve_linear_cost(alphas, &scaled, &zero, &SolveOptions::default())?;
        gaps.push(max_gap(&alloc.weights, &target.weights));
    }
    Ok(report(zetas, gaps))
}

/// Same sweep with linear costs, against [`regression_with_costs`].
pub fn limit_consistency_check_with_costs(
    alphas: &[f64],
    fm: &FactorModel,
    costs: &[f64],
    zetas: &[f64],
    options: &SolveOptions,
) -> Result<ConvergenceReport> {
    check_zetas(zetas)?;
    let target = regression_with_costs(alphas, &RegressionSpec::from_factor_model(fm)?, costs, options)?;
    let mut gaps = Vec::with_capacity(zetas.len());
    for &z in zetas {
        let scaled = fm.scale_specific(z)?;
        let alloc = solve_linear_cost(alphas, &scaled, costs, options)?;
        gaps.push(max_gap(&alloc.weights, &target.weights));
    }
    Ok(report(zetas, gaps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Provenance;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ones(n: usize) -> RegressionSpec {
        RegressionSpec::new(DMatrix::from_element(n, 1, 1.0), vec![1.0; n]).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng, n: usize, k: usize) -> RegressionSpec {
        let loadings = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        RegressionSpec::new(loadings, w).unwrap()
    }

    #[test]
    fn demeaning_pair() {
        let (eps, eta) = weighted_residuals(&[1.0, 0.3], &ones(2)).unwrap();
        assert!((eta[0] - 0.65).abs() < 1e-15);
        assert!((eps[0] - 0.35).abs() < 1e-15 && (eps[1] + 0.35).abs() < 1e-15);
        let alloc = regression_limit_weights(&[1.0, 0.3], &ones(2)).unwrap();
        assert!((alloc.weights[0] - 0.5).abs() < 1e-15 && (alloc.weights[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn span_gives_zero_residuals() {
        let spec = RegressionSpec::new(DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]), vec![1.0, 0.5, 2.0]).unwrap();
        let (eps, eta) = weighted_residuals(&[0.5, 1.0, 1.5], &spec).unwrap();
        assert!(eps.iter().all(|e| e.abs() < 1e-15));
        assert!((eta[0] - 0.5).abs() < 1e-15);
        assert_eq!(regression_limit_weights(&[0.5, 1.0, 1.5], &spec).unwrap_err(), Error::AllZeroWeights);
    }

    #[test]
    fn no_factors_is_diagonal_solution() {
        let spec = RegressionSpec::new(DMatrix::zeros(3, 0), vec![1.0, 2.0, 4.0]).unwrap();
        let a = regression_limit_weights(&[1.0, -1.0, 1.0], &spec).unwrap();
        let raw = [1.0, -2.0, 4.0];
        for i in 0..3 {
            assert!((a.weights[i] - raw[i] / 7.0).abs() < 1e-15);
        }
        let c = regression_with_costs(&[1.0, -1.0, 0.2], &spec, &[0.5, 0.5, 0.5], &SolveOptions::default()).unwrap();
        // soft thresholds 0.5, -0.5, 0 times weights 1, 2, 4
        assert!((c.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.weights[1] + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.inactive, vec![2]);
    }

    #[test]
    fn rank_deficient_loadings_are_rejected() {
        let l = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            RegressionSpec::new(l, vec![1.0; 3]),
            Err(Error::RankDeficientLoadings { .. })
        ));
        assert!(matches!(
            RegressionSpec::new(DMatrix::zeros(1, 2), vec![1.0]),
            Err(Error::RankDeficientLoadings { .. })
        ));
    }

    #[test]
    fn single_stream_factor_form() {
        let l = DMatrix::from_element(1, 1, 0.7);
        let w = factor_form_weights(&[0.3], &[0.2], &l).unwrap();
        assert!((w[0] - 0.3 / (0.2 + 0.49)).abs() < 1e-15);
    }

    #[test]
    fn zero_cost_regression_matches_limit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 12, 3);
            let alphas: Vec<f64> = (0..12).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let a = regression_limit_weights(&alphas, &spec).unwrap();
            let b = regression_with_costs(&alphas, &spec, &[0.0; 12], &SolveOptions::default()).unwrap();
            assert!(max_gap(&a.weights, &b.weights) < 1e-10);
        }
    }

    #[test]
    fn costly_regression_is_consistent_and_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let spec = random_spec(&mut rng, 15, 2);
            let alphas: Vec<f64> = (0..15).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let costs: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..0.6)).collect();
            let Ok(a) = regression_with_costs(&alphas, &spec, &costs, &SolveOptions::default()) else {
                continue;
            };
            assert!(factor_exposure(&a.weights, &spec) < 1e-10);
            assert!(a.diagnostics.min_cost_slack.is_none_or(|s| s >= -1e-12));
        }
    }

    #[test]
    fn costly_limit_sweep_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, f) = (10, 2);
        let loadings = DMatrix::from_fn(n, f, |_, _| rng.sample::<f64, _>(StandardNormal));
        let xi2: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let fm = FactorModel::new(xi2, loadings, Provenance::UserSupplied).unwrap();
        let alphas: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let costs = vec![0.3; n];
        let rep = limit_consistency_check_with_costs(&alphas, &fm, &costs, &DEFAULT_ZETAS, &SolveOptions::default()).unwrap();
        assert!(rep.final_gap < 1e-4, "{rep:?}");
    }

    #[test]
    fn zeta_sequence_is_validated() {
        let fm = FactorModel::diagonal(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            limit_consistency_check(&[1.0, 0.5], &fm, &[1.0, 1.0]),
            Err(Error::InvalidOption(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn residuals_are_weighted_orthogonal(seed in 0u64..10_000, n in 3usize..15, k in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, n, k);
            let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let (eps, _) = weighted_residuals(&y, &spec).unwrap();
            let scale = y.iter().map(|v| v.abs()).sum::<f64>() * spec.loadings().amax().max(1.0);
            for c in 0..k {
                let dot: f64 = (0..n).map(|i| spec.reg_weights()[i] * eps[i] * spec.loadings()[(i, c)]).sum();
                prop_assert!(dot.abs() < 1e-10 * scale);
            }
        }

        #[test]
        fn residuals_ignore_loading_rotation(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, 10, 3);
            let z = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal)) + DMatrix::identity(3, 3) * 3.0;
            let rotated = RegressionSpec::new(spec.loadings() * z, spec.reg_weights().to_vec()).unwrap();
            let y: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let (a, _) = weighted_residuals(&y, &spec).unwrap();
            let (b, _) = weighted_residuals(&y, &rotated).unwrap();
            prop_assert!(max_gap(&a, &b) < 1e-10);
        }

        #[test]
        fn factor_form_inverts_covariance(seed in 0u64..10_000, n in 1usize..21, k in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
            let alphas: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let w = factor_form_weights(&alphas, &v, &l).unwrap();
            let c = DMatrix::from_diagonal(&DVector::from_vec(v.clone())) + &l * l.transpose();
            let direct = c.cholesky().unwrap().solve(&DVector::from_vec(alphas.clone()));
            let scale = direct.amax().max(1.0);
            for i in 0..n {
                prop_assert!((w[i] - direct[i]).abs() < 1e-10 * scale);
            }
        }
    }
}
