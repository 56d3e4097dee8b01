//! Independent checks: exhaustive search over all sign patterns for small
//! universes, finite-perturbation descent tests, and the stock-level linear
//! cost aggregation behind the portfolio-level `L D` cost.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{restrict_square, spd_solve};

/// Largest universe the exhaustive search accepts.
pub const MAX_ORACLE_STREAMS: usize = 8;

/// Per-stream state: `+1`, `-1`, or `0` for a zero weight.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignPattern(pub Vec<i8>);

impl SignPattern {
    /// Pattern number `index` in base 3, stream 0 least significant, with
    /// digits 0, 1, 2 meaning zero, `+1`, `-1`.
    pub fn from_index(mut index: usize, n: usize) -> Self {
        let mut s = vec![0; n];
        for slot in s.iter_mut() {
            *slot = match index % 3 {
                0 => 0,
                1 => 1,
                _ => -1,
            };
            index /= 3;
        }
        SignPattern(s)
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] != 0).collect()
    }

    pub fn all(n: usize) -> impl Iterator<Item = SignPattern> {
        (0..3usize.pow(n as u32)).map(move |k| SignPattern::from_index(k, n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Minimizer of `g` at the given `lambda` (not normalized).
    pub weights: Vec<f64>,
    pub objective: f64,
    pub pattern: SignPattern,
    pub patterns_examined: usize,
    /// Every pattern passing both sign consistency and the cost slack.
    pub feasible: Vec<SignPattern>,
    /// Feasible patterns whose objective ties the minimum.
    pub tied: Vec<SignPattern>,
    /// Patterns whose stationary point has a sign disagreeing with the pattern.
    pub sign_inconsistent: Vec<SignPattern>,
}

/// `g(w) = lambda/2 w'Cw - alpha'w + sum_i L_i |w_i|`.
pub fn objective(alphas: &[f64], cov: &DMatrix<f64>, costs: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let wv = DVector::from_column_slice(w);
    let quad = wv.dot(&(cov * &wv));
    let lin: f64 = (0..w.len()).map(|i| alphas[i] * w[i] - costs[i] * w[i].abs()).sum();
    0.5 * lambda * quad - lin
}

/// Exhaustive minimization of `g` over all `3^N` patterns.
pub fn brute_force_solve(alphas: &[f64], cov: &DMatrix<f64>, costs: &[f64], lambda: f64) -> Result<OracleResult> {
    let n = alphas.len();
    if n > MAX_ORACLE_STREAMS {
        return Err(Error::TooManyStreams(n));
    }
    if n == 0 || cov.nrows() != n || cov.ncols() != n || costs.len() != n {
        return Err(Error::DimensionMismatch("oracle inputs disagree in size".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidOption("lambda must be positive".into()));
    }
    cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let scale = 1.0 + alphas.iter().chain(costs).fold(0.0_f64, |m, x| m.max(x.abs()));
    let slack_tol = 1e-12 * scale;

    let mut best: Option<(f64, SignPattern, Vec<f64>)> = None;
    let mut feasible = Vec::new();
    let mut values = Vec::new();
    let mut sign_inconsistent = Vec::new();
    let mut examined = 0;
    for pattern in SignPattern::all(n) {
        examined += 1;
        let j = pattern.active();
        let mut w = vec![0.0; n];
        if !j.is_empty() {
            let cjj = restrict_square(cov, &j);
            let rhs = DVector::from_iterator(
                j.len(),
                j.iter().map(|&i| (alphas[i] - costs[i] * pattern.0[i] as f64) / lambda),
            );
            let wj = spd_solve(&cjj, &rhs)?;
            for (k, &i) in j.iter().enumerate() {
                w[i] = wj[k];
            }
            if j.iter().any(|&i| w[i] * pattern.0[i] as f64 <= 0.0) {
                sign_inconsistent.push(pattern);
                continue;
            }
        }
        let cw = cov * DVector::from_column_slice(&w);
        let slack_ok = (0..n)
            .filter(|&i| pattern.0[i] == 0)
            .all(|i| (lambda * cw[i] - alphas[i]).abs() <= costs[i] + slack_tol);
        if !slack_ok {
            continue;
        }
        let g = objective(alphas, cov, costs, lambda, &w);
        feasible.push(pattern.clone());
        values.push(g);
        // Ties go to the smaller active set; enumeration order is the
        // final tie-break since later patterns only replace on strict gain.
        let replace = match &best {
            None => true,
            Some((bg, bp, _)) => {
                let tol = 1e-12 * (1.0 + bg.abs());
                g < bg - tol || ((g - bg).abs() <= tol && j.len() < bp.active().len())
            }
        };
        if replace {
            best = Some((g, pattern, w));
        }
    }
    let (g, pattern, weights) = best.ok_or(Error::NoFeasiblePattern)?;
    if pattern.active().is_empty() {
        return Err(Error::NoFeasiblePattern);
    }
    let tol = 1e-12 * (1.0 + g.abs());
    let tied = feasible
        .iter()
        .zip(&values)
        .filter(|(_, v)| (**v - g).abs() <= tol)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(OracleResult {
        weights,
        objective: g,
        pattern,
        patterns_examined: examined,
        feasible,
        tied,
        sign_inconsistent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    /// Most negative `g(w + e) - g(w)` seen; 0 if none was negative.
    pub worst_violation: f64,
    pub draws: usize,
    pub seed: u64,
}

pub const DESCENT_DRAWS: usize = 10_000;

/// Probes `g(w + e) - g(w)` for random perturbations with magnitudes
/// log-uniform in `[1e-4, 1e-1]` and for signed coordinate steps. The
/// difference is evaluated in expanded form,
/// `lambda w'Ce + lambda/2 e'Ce - alpha'e + sum_i L_i (|w_i + e_i| - |w_i|)`,
/// so that it does not suffer cancellation between two large objectives.
pub fn numeric_descent_check(
    alphas: &[f64],
    cov: &DMatrix<f64>,
    costs: &[f64],
    lambda: f64,
    weights: &[f64],
    seed: u64,
) -> DescentReport {
    let n = weights.len();
    let w = DVector::from_column_slice(weights);
    let cw = cov * &w;
    let delta = |e: &DVector<f64>| -> f64 {
        let ce = cov * e;
        let mut d = lambda * cw.dot(e) + 0.5 * lambda * e.dot(&ce);
        for i in 0..n {
            d += -alphas[i] * e[i] + costs[i] * ((weights[i] + e[i]).abs() - weights[i].abs());
        }
        d
    };
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..DESCENT_DRAWS {
        let mag = 10f64.powf(rng.random_range(-4.0..-1.0));
        let mut e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = e.norm();
        if norm == 0.0 {
            continue;
        }
        e *= mag / norm;
        worst = worst.min(delta(&e));
        draws += 1;
    }
    for k in 0..n {
        for mag in [1e-4, 1e-3, 1e-2, 1e-1] {
            for s in [1.0, -1.0] {
                let mut e = DVector::zeros(n);
                e[k] = s * mag;
                worst = worst.min(delta(&e));
                draws += 1;
            }
        }
    }
    DescentReport {
        worst_violation: worst,
        draws,
        seed,
    }
}

/// Trades of `N` alphas in `N_S` stocks over one rebalance.
#[derive(Debug, Clone, PartialEq)]
pub struct StockTradeRecord {
    /// `P_A`, dollars per share.
    pub prices: Vec<f64>,
    /// `Q_iA >= 0` shares traded, buys and sells alike.
    pub shares_traded: DMatrix<f64>,
    /// `L_iA`, dollars per share.
    pub per_share_costs: DMatrix<f64>,
    /// `S_iA`, absolute shares held.
    pub holdings: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockCostComparison {
    /// `sum_iA L_iA Q_iA`.
    pub exact_cost: f64,
    /// `L D`.
    pub approx_cost: f64,
    pub relative_gap: f64,
    /// `D = sum_iA P_A Q_iA`.
    pub dollars_traded: f64,
    /// `H_i = sum_A P_A S_iA`.
    pub holdings_value: Vec<f64>,
    /// `D_i = sum_A P_A Q_iA`.
    pub alpha_dollars_traded: Vec<f64>,
}

pub fn stock_level_linear_cost(record: &StockTradeRecord, uniform_l: f64) -> Result<StockCostComparison> {
    let ns = record.prices.len();
    let n = record.shares_traded.nrows();
    for (name, m) in [
        ("shares_traded", &record.shares_traded),
        ("per_share_costs", &record.per_share_costs),
        ("holdings", &record.holdings),
    ] {
        if m.nrows() != n || m.ncols() != ns {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}x{}, expected {n}x{ns}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidOption(format!("{name} must be finite and >= 0")));
        }
    }
    if record.prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidOption("prices must be positive".into()));
    }
    let p = DVector::from_column_slice(&record.prices);
    let alpha_dollars = &record.shares_traded * &p;
    let holdings_value = &record.holdings * &p;
    let exact_cost = record.per_share_costs.component_mul(&record.shares_traded).sum();
    let dollars_traded = alpha_dollars.sum();
    let approx_cost = uniform_l * dollars_traded;
    let relative_gap = if exact_cost == 0.0 {
        if approx_cost == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (approx_cost - exact_cost).abs() / exact_cost
    };
    Ok(StockCostComparison {
        exact_cost,
        approx_cost,
        relative_gap,
        dollars_traded,
        holdings_value: holdings_value.iter().copied().collect(),
        alpha_dollars_traded: alpha_dollars.iter().copied().collect(),
    })
}
