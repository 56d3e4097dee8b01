//! Sharpe maximization with linear costs on a factor-model covariance.
//!
//! At a fixed scale `lambda` the problem is
//!
//! ```text
//! g(w) = lambda/2 w'Gw - sum_i (alpha_i w_i - L_i |w_i|),   G = diag(xi^2) + B B'
//! ```
//!
//! For a given active set `J` and signs `eta` on it, the minimizer is
//! determined by the `F`-vector `v = B'w`, which solves
//!
//! ```text
//! Q v = a,  Q = I + sum_J B_i B_i' / xi_i^2,  a = (1/lambda) sum_J B_i (alpha_i - L_i eta_i) / xi_i^2
//! ```
//!
//! and conversely `(J, eta)` follow from `u_i = alpha_i - lambda B_i'v`:
//! stream `i` is active iff `|u_i| > L_i`, with `eta_i = sign(u_i)`. The solver
//! alternates these two maps starting from `J = all`, `eta = sign(alpha)` and
//! stops once `(J, eta)` reproduce themselves, at which point the solution
//! is exact.
//!
//! The alternation is a Newton iteration on the strongly convex function
//!
//! ```text
//! theta(v) = lambda/2 |v|^2 + sum_i (|u_i(v)| - L_i)_+^2 / (2 lambda xi_i^2)
//! ```
//!
//! whose minimizer is `B'w*`. With [`SolveOptions::line_search`] on, a step
//! that fails to decrease `theta` is shortened (Armijo backtracking), which
//! rules out cycling; full steps are taken whenever they decrease `theta`,
//! so the exact termination is unaffected.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covariance::{FactorModel, FactorModelSource};
use crate::error::{Error, Result};
use crate::impact::solver_costs;
use crate::linalg::{is_symmetric, sign, spd_solve};
use crate::model::{AlphaSet, Allocation, CostSpec, Diagnostics};
use crate::turnover::{correlation_of, resolve_rho_star};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Internal scale the inner loop runs at. The partition and the
    /// normalized weights do not depend on it.
    pub lambda: f64,
    /// Inner sweep cap; `None` means `100 * N`.
    pub max_iterations: Option<usize>,
    /// Relative tolerance under which two `v` iterates count as equal.
    pub v_tolerance: f64,
    /// Tolerance for the optimality certificate.
    pub condition_tolerance: f64,
    pub line_search: bool,
    pub outer_loop: bool,
    pub outer_max_rounds: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            lambda: 1.0,
            max_iterations: None,
            v_tolerance: 1e-12,
            condition_tolerance: 1e-9,
            line_search: true,
            outer_loop: true,
            outer_max_rounds: 50,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOption(m.into()));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.v_tolerance > 0.0 && self.condition_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iterations == Some(0) || self.outer_max_rounds == 0 {
            return bad("iteration caps must be at least 1");
        }
        Ok(())
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(100 * n.max(1))
    }
}

/// Iteration state of the inner loop.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// `eta_i` on the active set, 0 on the inactive set.
    pub signs: Vec<i8>,
    pub v: DVector<f64>,
    pub iteration: usize,
    /// Whether `v` solves the reduced system of `signs` exactly.
    exact: bool,
    /// Hashes of the partitions solved exactly so far.
    history: HashSet<u64>,
}

impl SolverState {
    pub fn active(&self) -> Vec<usize> {
        (0..self.signs.len()).filter(|&i| self.signs[i] != 0).collect()
    }
}

fn partition_hash(signs: &[i8]) -> u64 {
    let mut h = DefaultHasher::new();
    signs.hash(&mut h);
    h.finish()
}

fn describe(signs: &[i8]) -> String {
    signs
        .iter()
        .map(|s| match s {
            1 => '+',
            -1 => '-',
            _ => '0',
        })
        .collect()
}

struct Problem<'a> {
    alphas: &'a [f64],
    xi2: &'a [f64],
    loadings: &'a DMatrix<f64>,
    costs: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.alphas.len()
    }

    fn f(&self) -> usize {
        self.loadings.ncols()
    }

    fn reduced_system(&self, signs: &[i8]) -> (DMatrix<f64>, DVector<f64>) {
        let f = self.f();
        let mut q = DMatrix::<f64>::identity(f, f);
        let mut a = DVector::zeros(f);
        for i in 0..self.n() {
            if signs[i] == 0 {
                continue;
            }
            let row = self.loadings.row(i);
            let inv = 1.0 / self.xi2[i];
            let target = self.alphas[i] - self.costs[i] * signs[i] as f64;
            for p in 0..f {
                a[p] += row[p] * inv * target / self.lambda;
                for r in p..f {
                    q[(p, r)] += row[p] * row[r] * inv;
                }
            }
        }
        for p in 0..f {
            for r in 0..p {
                q[(p, r)] = q[(r, p)];
            }
        }
        (q, a)
    }

    fn solve_partition(&self, signs: &[i8]) -> Result<DVector<f64>> {
        let (q, a) = self.reduced_system(signs);
        spd_solve(&q, &a)
    }

    /// `u_i = alpha_i - lambda B_i'v`.
    fn residuals(&self, v: &DVector<f64>) -> Vec<f64> {
        let bv = self.loadings * v;
        (0..self.n()).map(|i| self.alphas[i] - self.lambda * bv[i]).collect()
    }

    /// Ties `|u_i| = L_i` go to the inactive set.
    fn partition(&self, u: &[f64]) -> Vec<i8> {
        u.iter()
            .zip(self.costs)
            .map(|(&ui, &li)| if ui.abs() > li { sign(ui) } else { 0 })
            .collect()
    }

    fn theta(&self, v: &DVector<f64>) -> f64 {
        let u = self.residuals(v);
        let excess: f64 = (0..self.n())
            .map(|i| {
                let e = (u[i].abs() - self.costs[i]).max(0.0);
                e * e / (self.xi2[i])
            })
            .sum();
        0.5 * self.lambda * v.norm_squared() + 0.5 * excess / self.lambda
    }

    /// Weights implied by `v`: `w_i = soft(u_i, L_i) / (lambda xi_i^2)`.
    fn weights(&self, v: &DVector<f64>) -> Vec<f64> {
        let u = self.residuals(v);
        (0..self.n())
            .map(|i| {
                let mag = u[i].abs() - self.costs[i];
                if mag > 0.0 {
                    sign(u[i]) as f64 * mag / (self.lambda * self.xi2[i])
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = DVector::from_vec(self.weights(v));
        (v - self.loadings.transpose() * w) * self.lambda
    }

    fn objective(&self, w: &[f64]) -> f64 {
        let wv = DVector::from_column_slice(w);
        let bw = self.loadings.transpose() * &wv;
        let spec: f64 = w.iter().zip(self.xi2).map(|(x, v)| v * x * x).sum();
        let linear: f64 = (0..self.n())
            .map(|i| self.alphas[i] * w[i] - self.costs[i] * w[i].abs())
            .sum();
        0.5 * self.lambda * (spec + bw.norm_squared()) - linear
    }
}

fn check_inputs(alphas: &[f64], fm: &FactorModel, costs: &[f64]) -> Result<()> {
    let n = alphas.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("no streams".into()));
    }
    if fm.num_streams() != n || costs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} alphas, {} factor-model streams, {} costs",
            fm.num_streams(),
            costs.len()
        )));
    }
    if let Some(i) = alphas.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite(format!("alpha of stream {i}")));
    }
    if let Some(i) = costs.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidCostSpec(format!(
            "cost of stream {i} must be >= 0, got {}",
            costs[i]
        )));
    }
    Ok(())
}

/// Runs the inner loop to its fixed point and returns the final state.
fn run_inner(problem: &Problem<'_>, options: &SolveOptions, diag: &mut Diagnostics) -> Result<SolverState> {
    let n = problem.n();
    let cap = options.iteration_cap(n);
    let initial: Vec<i8> = problem
        .alphas
        .iter()
        .map(|&a| if a < 0.0 { -1 } else { 1 })
        .collect();
    let v = problem.solve_partition(&initial)?;
    let mut state = SolverState {
        signs: initial,
        v,
        iteration: 1,
        exact: true,
        history: HashSet::new(),
    };
    state.history.insert(partition_hash(&state.signs));

    loop {
        let next = problem.partition(&problem.residuals(&state.v));
        if state.exact && next == state.signs {
            break;
        }
        if state.iteration >= cap {
            return Err(Error::MaxIterations { limit: cap });
        }
        let candidate = problem.solve_partition(&next)?;
        state.iteration += 1;

        let scale = 1.0 + state.v.norm();
        if state.exact && (&candidate - &state.v).norm() <= options.v_tolerance * scale {
            // The partition moved only across ties |u_i| = L_i; v is stable.
            state.signs = next;
            state.v = candidate;
            break;
        }

        let (v_new, full) = if options.line_search {
            line_search(problem, &state.v, &candidate)
        } else {
            (candidate, true)
        };
        if !full {
            diag.damped_steps += 1;
        }
        state.signs = next;
        state.v = v_new;
        state.exact = full;

        if full && !state.history.insert(partition_hash(&state.signs)) {
            // The sweep map is deterministic and theta never increases, so
            // solving the same partition twice means the iteration repeats.
            return Err(Error::CycleDetected {
                iteration: state.iteration,
                state: describe(&state.signs),
            });
        }
    }
    Ok(state)
}

/// Armijo backtracking along `candidate - v`. Returns the accepted point and
/// whether it is the full step.
fn line_search(problem: &Problem<'_>, v: &DVector<f64>, candidate: &DVector<f64>) -> (DVector<f64>, bool) {
    const ARMIJO: f64 = 1e-4;
    let theta = problem.theta(v);
    let dir = candidate - v;
    let slope = problem.gradient(v).dot(&dir);
    let slack = 1e-13 * (1.0 + theta.abs());
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = v + &dir * t;
        if problem.theta(&trial) <= theta + ARMIJO * t * slope + slack {
            return (trial, t == 1.0);
        }
        t *= 0.5;
    }
    (candidate.clone(), true)
}

/// Weights at the internal scale plus residual diagnostics.
fn finish(
    problem: &Problem<'_>,
    state: &SolverState,
    mut diag: Diagnostics,
) -> Result<Allocation> {
    let u = problem.residuals(&state.v);
    let raw: Vec<f64> = (0..problem.n())
        .map(|i| {
            if state.signs[i] == 0 {
                0.0
            } else {
                let eta = state.signs[i] as f64;
                (u[i] - problem.costs[i] * eta) / (problem.lambda * problem.xi2[i])
            }
        })
        .collect();
    if raw.iter().all(|w| *w == 0.0) {
        return Err(Error::AllAlphasKilled);
    }
    diag.inner_iterations = state.iteration;
    diag.objective = problem.objective(&raw);
    let mut alloc = Allocation::from_raw(&raw, problem.lambda, problem.costs.to_vec(), diag)?;
    let fm_cov = FactorResidual {
        xi2: problem.xi2,
        loadings: problem.loadings,
    };
    let (stat, slack) = fm_cov.conditions(&alloc, problem.alphas, problem.costs, alloc.lambda);
    alloc.diagnostics.stationarity_residual = stat;
    alloc.diagnostics.min_cost_slack = slack;
    Ok(alloc)
}

struct FactorResidual<'a> {
    xi2: &'a [f64],
    loadings: &'a DMatrix<f64>,
}

impl FactorResidual<'_> {
    fn conditions(&self, alloc: &Allocation, alphas: &[f64], costs: &[f64], lambda: f64) -> (f64, Option<f64>) {
        let w = DVector::from_column_slice(&alloc.weights);
        let bw = self.loadings.transpose() * &w;
        let gw = self.loadings * bw + DVector::from_fn(w.len(), |i, _| self.xi2[i] * w[i]);
        residuals_from_gw(&gw, alloc, alphas, costs, lambda)
    }
}

fn residuals_from_gw(
    gw: &DVector<f64>,
    alloc: &Allocation,
    alphas: &[f64],
    costs: &[f64],
    lambda: f64,
) -> (f64, Option<f64>) {
    let mut stationarity: f64 = 0.0;
    let mut slack: Option<f64> = None;
    for i in 0..alloc.weights.len() {
        let eta = alloc.signs[i];
        if eta != 0 {
            let r = lambda * gw[i] - alphas[i] + costs[i] * eta as f64;
            stationarity = stationarity.max(r.abs());
        } else {
            let s = costs[i] - (lambda * gw[i] - alphas[i]).abs();
            slack = Some(slack.map_or(s, |m: f64| m.min(s)));
        }
    }
    (stationarity, slack)
}

/// Maximum-Sharpe weights without costs: `w ~ C^{-1} alpha`.
pub fn solve_no_cost(alphas: &[f64], cov: &DMatrix<f64>) -> Result<Allocation> {
    let n = alphas.len();
    if n == 0 || cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} alphas for {}x{} covariance",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !is_symmetric(cov, 1e-12) {
        return Err(Error::NotSymmetric);
    }
    let eig = SymmetricEigen::new(cov.clone());
    let (max, min) = (eig.eigenvalues.max(), eig.eigenvalues.min());
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::SingularCovariance);
    }
    let alpha = DVector::from_column_slice(alphas);
    let raw = spd_solve(cov, &alpha).map_err(|_| Error::SingularCovariance)?;
    let raw: Vec<f64> = raw.iter().copied().collect();
    let objective = 0.5 * DVector::from_column_slice(&raw).dot(&(cov * DVector::from_column_slice(&raw)))
        - alpha.dot(&DVector::from_column_slice(&raw));
    let diag = Diagnostics {
        inner_iterations: 1,
        objective,
        ..Default::default()
    };
    let mut alloc = Allocation::from_raw(&raw, 1.0, vec![0.0; n], diag)?;
    let gw = cov * DVector::from_column_slice(&alloc.weights);
    let (stat, slack) = residuals_from_gw(&gw, &alloc, alphas, &vec![0.0; n], alloc.lambda);
    alloc.diagnostics.stationarity_residual = stat;
    alloc.diagnostics.min_cost_slack = slack;
    Ok(alloc)
}

/// Maximum-Sharpe weights under per-stream linear costs `costs` on the
/// factor-model covariance `fm`.
pub fn solve_linear_cost(
    alphas: &[f64],
    fm: &FactorModel,
    costs: &[f64],
    options: &SolveOptions,
) -> Result<Allocation> {
    options.validate()?;
    check_inputs(alphas, fm, costs)?;
    // Zero is optimal exactly when no alpha clears its cost.
    if alphas.iter().zip(costs).all(|(a, l)| a.abs() <= *l) {
        return Err(Error::AllAlphasKilled);
    }
    let problem = Problem {
        alphas,
        xi2: fm.specific_var(),
        loadings: fm.loadings(),
        costs,
        lambda: options.lambda,
    };
    let mut diag = Diagnostics::default();
    let state = run_inner(&problem, options, &mut diag)?;
    finish(&problem, &state, diag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Largest `|lambda (G w)_i - alpha_i + L_i eta_i|` over active streams.
    pub max_stationarity_residual: f64,
    /// Smallest `L_j - |lambda (G w)_j - alpha_j|` over inactive streams.
    pub min_cost_slack: Option<f64>,
    pub sign_consistent: bool,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the optimality conditions of `allocation` against the explicit
/// covariance implied by `fm`.
pub fn verify_global_optimum(
    allocation: &Allocation,
    fm: &FactorModel,
    alphas: &[f64],
    costs: &[f64],
    lambda: f64,
    tolerance: f64,
) -> ConditionReport {
    verify_with_covariance(allocation, &fm.implied_covariance(), alphas, costs, lambda, tolerance)
}

/// Same as [`verify_global_optimum`] for an arbitrary covariance matrix.
pub fn verify_with_covariance(
    allocation: &Allocation,
    cov: &DMatrix<f64>,
    alphas: &[f64],
    costs: &[f64],
    lambda: f64,
    tolerance: f64,
) -> ConditionReport {
    let w = DVector::from_column_slice(&allocation.weights);
    let gw = cov * &w;
    let (stat, slack) = residuals_from_gw(&gw, allocation, alphas, costs, lambda);
    let sign_consistent = allocation
        .weights
        .iter()
        .zip(&allocation.signs)
        .all(|(&w, &s)| sign(w) == s);
    let passed = sign_consistent && stat < tolerance && slack.is_none_or(|s| s >= -tolerance);
    ConditionReport {
        max_stationarity_residual: stat,
        min_cost_slack: slack,
        sign_consistent,
        tolerance,
        passed,
    }
}

/// Solves with turnover-reduction recomputation: inactive streams are
/// dropped, `rho*` is re-estimated on the remaining correlation matrix, and
/// the solve is repeated until the universe equals the active set.
pub fn solve_with_rho_star_loop(
    alpha_set: &AlphaSet,
    source: &dyn FactorModelSource,
    cost_spec: &CostSpec,
    options: &SolveOptions,
) -> Result<Allocation> {
    cost_spec.validate()?;
    options.validate()?;
    let n = alpha_set.len();
    let corr = correlation_of(alpha_set)?;
    let mut universe: Vec<usize> = (0..n).collect();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut rho_history = Vec::new();
    let rounds_cap = if options.outer_loop { options.outer_max_rounds } else { 1 };

    for round in 1..=rounds_cap {
        let rho = resolve_rho_star(&corr, &universe, cost_spec)?;
        rho_history.push(rho.rho_star);
        let full_costs = solver_costs(cost_spec, alpha_set.turnovers(), &universe, rho.rho_star);
        let sub_costs: Vec<f64> = universe.iter().map(|&i| full_costs[i]).collect();
        let sub_alphas: Vec<f64> = universe.iter().map(|&i| alpha_set.alphas()[i]).collect();
        let fm = source.build(&universe)?;
        let mut alloc = solve_linear_cost(&sub_alphas, &fm, &sub_costs, options)?;
        alloc.rho_star = Some(rho.rho_star);
        if rho.clamped_high || rho.clamped_low {
            alloc.diagnostics.notes.push(format!(
                "round {round}: spectral rho* {:.6e} clamped to {}",
                rho.raw_value.unwrap_or(f64::NAN),
                rho.rho_star
            ));
        }
        if rho.degenerate {
            alloc
                .diagnostics
                .notes
                .push(format!("round {round}: leading correlation eigenvalue is degenerate"));
        }
        let active: Vec<usize> = alloc.active.iter().map(|&k| universe[k]).collect();
        let done = active.len() == universe.len() || !options.outer_loop;
        if done || round == rounds_cap {
            let mut full = alloc.embed(&universe, n, full_costs);
            full.diagnostics.outer_rounds = round;
            full.diagnostics.rho_star_history = rho_history;
            if !done {
                return Err(Error::OuterLoopCycle { rounds: round });
            }
            return Ok(full);
        }
        if seen.contains(&active) {
            return Err(Error::OuterLoopCycle { rounds: round });
        }
        seen.push(universe);
        universe = active;
    }
    unreachable!("loop returns on its last round")
}
