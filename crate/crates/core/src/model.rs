//! Domain types shared by every solver: the alpha universe, cost
//! parameters, allocations and P&L reports.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{l1_norm, sign};

/// Weights with `|w_i| < ZERO_WEIGHT_RATIO * max_j |w_j|` are set to zero.
pub const ZERO_WEIGHT_RATIO: f64 = 1e-12;

/// Unvalidated input for [`validate_alpha_set`]. Missing history cells are
/// `None` (or NaN).
#[derive(Debug, Clone, Default)]
pub struct AlphaSetCandidate {
    pub labels: Vec<String>,
    /// Row `s` holds observations at `t_s`; row 0 is the most recent.
    pub history: Vec<Vec<Option<f64>>>,
    pub turnovers: Vec<f64>,
    /// Current expected returns. Defaults to history row 0 when absent.
    pub alphas: Option<Vec<f64>>,
}

/// A validated alpha universe.
///
/// Alphas are expected to be pre-levered: an alpha run at leverage `K:1`
/// enters here as `K` times its raw expected return.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSet {
    labels: Vec<String>,
    alphas: Vec<f64>,
    history: DMatrix<f64>,
    turnovers: Vec<f64>,
}

impl AlphaSet {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `(M+1) x N` observations, row 0 most recent.
    pub fn history(&self) -> &DMatrix<f64> {
        &self.history
    }

    pub fn turnovers(&self) -> &[f64] {
        &self.turnovers
    }

    /// Streams `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> AlphaSet {
        AlphaSet {
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            alphas: indices.iter().map(|&i| self.alphas[i]).collect(),
            history: DMatrix::from_fn(self.history.nrows(), indices.len(), |r, c| {
                self.history[(r, indices[c])]
            }),
            turnovers: indices.iter().map(|&i| self.turnovers[i]).collect(),
        }
    }
}

pub fn validate_alpha_set(raw: AlphaSetCandidate) -> Result<AlphaSet> {
    let n = raw.labels.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("alpha set has no streams".into()));
    }
    let mut seen = HashSet::new();
    for label in &raw.labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
    }
    if raw.turnovers.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} turnovers for {} streams",
            raw.turnovers.len(),
            n
        )));
    }
    if raw.history.is_empty() {
        return Err(Error::DimensionMismatch("history has no observations".into()));
    }
    let rows = raw.history.len();
    let mut history = DMatrix::zeros(rows, n);
    for (r, row) in raw.history.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "history row {r} has {} values for {n} streams",
                row.len()
            )));
        }
        for (c, cell) in row.iter().enumerate() {
            match cell {
                Some(x) if x.is_finite() => history[(r, c)] = *x,
                Some(x) if !x.is_nan() => {
                    return Err(Error::NonFinite(format!("history[{r}][{c}] = {x}")))
                }
                _ => return Err(Error::MissingValues { row: r, column: c }),
            }
        }
    }
    for (i, &tau) in raw.turnovers.iter().enumerate() {
        if !tau.is_finite() {
            return Err(Error::NonFinite(format!("turnover of stream {i}")));
        }
        if tau < 0.0 {
            return Err(Error::NegativeTurnover { index: i, value: tau });
        }
    }
    let alphas = match raw.alphas {
        Some(a) => {
            if a.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} alphas for {n} streams",
                    a.len()
                )));
            }
            if let Some(i) = a.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("alpha of stream {i}")));
            }
            a
        }
        None => history.row(0).iter().copied().collect(),
    };
    Ok(AlphaSet {
        labels: raw.labels,
        alphas,
        history,
        turnovers: raw.turnovers,
    })
}

/// Cost parameters. `linear_coeff` is a fraction of dollars traded;
/// `impact_coeff` has units of dollars^(1 - n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub linear_coeff: f64,
    #[serde(default)]
    pub impact_coeff: f64,
    #[serde(default = "default_exponent")]
    pub impact_exponent: f64,
    #[serde(default = "default_investment")]
    pub investment: f64,
    #[serde(default)]
    pub rho_star_override: Option<f64>,
}

fn default_exponent() -> f64 {
    1.5
}

fn default_investment() -> f64 {
    1.0
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            linear_coeff: 0.0,
            impact_coeff: 0.0,
            impact_exponent: default_exponent(),
            investment: default_investment(),
            rho_star_override: None,
        }
    }
}

impl CostSpec {
    pub fn linear(linear_coeff: f64) -> Self {
        CostSpec {
            linear_coeff,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCostSpec(msg));
        if !(self.linear_coeff.is_finite() && self.linear_coeff >= 0.0) {
            return bad(format!("linear_coeff must be >= 0, got {}", self.linear_coeff));
        }
        if !(self.impact_coeff.is_finite() && self.impact_coeff >= 0.0) {
            return bad(format!("impact_coeff must be >= 0, got {}", self.impact_coeff));
        }
        if self.impact_coeff > 0.0 && !(self.impact_exponent.is_finite() && self.impact_exponent > 1.0) {
            return bad(format!("impact_exponent must be > 1, got {}", self.impact_exponent));
        }
        if !(self.investment.is_finite() && self.investment > 0.0) {
            return bad(format!("investment must be > 0, got {}", self.investment));
        }
        if let Some(rho) = self.rho_star_override {
            if !(rho > 0.0 && rho <= 1.0) {
                return bad(format!("rho_star_override must lie in (0, 1], got {rho}"));
            }
        }
        Ok(())
    }

    pub fn with_investment(mut self, investment: f64) -> Self {
        self.investment = investment;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Inner sweeps: each solves the reduced system once and re-partitions.
    pub inner_iterations: usize,
    /// Sweeps whose Newton step had to be shortened by the line search.
    pub damped_steps: usize,
    pub outer_rounds: usize,
    /// Objective `g(w, lambda)` at the internal scale, before normalization.
    pub objective: f64,
    pub stationarity_residual: f64,
    /// Smallest cost slack over inactive streams; `None` when all are active.
    pub min_cost_slack: Option<f64>,
    pub rho_star_history: Vec<f64>,
    pub notes: Vec<String>,
}

/// Normalized weights together with their partition and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub weights: Vec<f64>,
    /// `+1`/`-1` on the active set, `0` for inactive streams.
    pub signs: Vec<i8>,
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    /// Realized scale: `g(., lambda)` is minimized by the normalized weights.
    pub lambda: f64,
    pub rho_star: Option<f64>,
    pub effective_costs: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Allocation {
    /// Builds an allocation from minimizers of `g(., internal_lambda)`.
    pub(crate) fn from_raw(
        raw: &[f64],
        internal_lambda: f64,
        effective_costs: Vec<f64>,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let max = raw.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        if !(max > 0.0) {
            return Err(Error::AllZeroWeights);
        }
        let cleaned: Vec<f64> = raw
            .iter()
            .map(|&w| if w.abs() < ZERO_WEIGHT_RATIO * max { 0.0 } else { w })
            .collect();
        let (weights, scale) = normalize_weights(&cleaned)?;
        let signs: Vec<i8> = weights.iter().map(|&w| sign(w)).collect();
        let active = (0..weights.len()).filter(|&i| signs[i] != 0).collect();
        let inactive = (0..weights.len()).filter(|&i| signs[i] == 0).collect();
        Ok(Allocation {
            weights,
            signs,
            active,
            inactive,
            lambda: internal_lambda * scale,
            rho_star: None,
            effective_costs,
            diagnostics,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Re-embeds an allocation over `universe` into `n` streams.
    pub(crate) fn embed(self, universe: &[usize], n: usize, full_costs: Vec<f64>) -> Allocation {
        let mut weights = vec![0.0; n];
        let mut signs = vec![0; n];
        for (k, &i) in universe.iter().enumerate() {
            weights[i] = self.weights[k];
            signs[i] = self.signs[k];
        }
        Allocation {
            active: (0..n).filter(|&i| signs[i] != 0).collect(),
            inactive: (0..n).filter(|&i| signs[i] == 0).collect(),
            weights,
            signs,
            lambda: self.lambda,
            rho_star: self.rho_star,
            effective_costs: full_costs,
            diagnostics: self.diagnostics,
        }
    }
}

/// Rescales `w_raw` to unit L1 norm. Returns the weights and the scale
/// `sum |w_raw_i|`.
pub fn normalize_weights(w_raw: &[f64]) -> Result<(Vec<f64>, f64)> {
    let scale = l1_norm(w_raw);
    if !scale.is_finite() {
        return Err(Error::NonFinite("weights".into()));
    }
    if scale == 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok((w_raw.iter().map(|w| w / scale).collect(), scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlReport {
    /// Dollars.
    pub pnl: f64,
    /// Dollars.
    pub volatility: f64,
    pub sharpe: f64,
    pub linear_cost_total: f64,
    /// Exact impact cost `(Q~/n) (sum tau_i |w_i|)^n`.
    pub impact_cost_total: f64,
    /// Impact cost under the first-order turnover expansion, when computed.
    pub impact_cost_approx: Option<f64>,
    pub dollar_turnover: f64,
    pub turnover: f64,
}

/// Exact P&L, volatility and Sharpe ratio of normalized `weights`.
///
/// `risk` is the covariance used for volatility (sample or factor-implied).
pub fn evaluate_pnl(
    alpha_set: &AlphaSet,
    weights: &[f64],
    cost_spec: &CostSpec,
    rho_star: f64,
    risk: &DMatrix<f64>,
) -> Result<PnlReport> {
    cost_spec.validate()?;
    let n = alpha_set.len();
    if weights.len() != n || risk.nrows() != n || risk.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "weights {} / risk {}x{} for {n} streams",
            weights.len(),
            risk.nrows(),
            risk.ncols()
        )));
    }
    if !(rho_star > 0.0 && rho_star <= 1.0) {
        return Err(Error::InvalidOption(format!("rho_star {rho_star} outside (0, 1]")));
    }
    if (l1_norm(weights) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidOption("weights are not normalized".into()));
    }
    let inv = cost_spec.investment;
    let gross: f64 = alpha_set.alphas().iter().zip(weights).map(|(a, w)| a * w).sum();
    let raw_turnover: f64 = alpha_set
        .turnovers()
        .iter()
        .zip(weights)
        .map(|(t, w)| t * w.abs())
        .sum();
    let turnover = rho_star * raw_turnover;
    let dollar_turnover = inv * turnover;
    let linear_cost_total = cost_spec.linear_coeff * dollar_turnover;
    let impact_cost_total = exact_impact_cost(cost_spec, rho_star, raw_turnover);
    let pnl = inv * gross - linear_cost_total - impact_cost_total;

    let w = DVector::from_column_slice(weights);
    let variance = w.dot(&(risk * &w));
    if !(variance > 0.0) {
        return Err(Error::ZeroVolatility);
    }
    let volatility = inv * variance.sqrt();
    Ok(PnlReport {
        pnl,
        volatility,
        sharpe: pnl / volatility,
        linear_cost_total,
        impact_cost_total,
        impact_cost_approx: None,
        dollar_turnover,
        turnover,
    })
}

/// `(Q (I rho)^n / n) * raw_turnover^n`, zero without impact.
pub(crate) fn exact_impact_cost(cost_spec: &CostSpec, rho_star: f64, raw_turnover: f64) -> f64 {
    if cost_spec.impact_coeff == 0.0 {
        return 0.0;
    }
    let n = cost_spec.impact_exponent;
    let q_tilde = cost_spec.impact_coeff * (cost_spec.investment * rho_star).powf(n);
    q_tilde / n * raw_turnover.powf(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clean(n: usize, m: usize) -> AlphaSetCandidate {
        AlphaSetCandidate {
            labels: (0..n).map(|i| format!("a{i}")).collect(),
            history: (0..=m)
                .map(|s| (0..n).map(|i| Some(((s * 7 + i * 3) % 11) as f64 * 0.01)).collect())
                .collect(),
            turnovers: vec![0.3; n],
            alphas: None,
        }
    }

    #[test]
    fn clean_candidate_is_accepted_unchanged() {
        let raw = clean(2, 10);
        let set = validate_alpha_set(raw.clone()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.history().nrows(), 11);
        for (r, row) in raw.history.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                assert_eq!(set.history()[(r, c)], cell.unwrap());
            }
        }
        assert_eq!(set.alphas(), &[raw.history[0][0].unwrap(), raw.history[0][1].unwrap()]);
        assert_eq!(set.turnovers(), raw.turnovers.as_slice());
    }

    #[test]
    fn missing_cell_is_rejected() {
        let mut raw = clean(2, 10);
        raw.history[4][1] = None;
        assert_eq!(
            validate_alpha_set(raw).unwrap_err(),
            Error::MissingValues { row: 4, column: 1 }
        );
        let mut raw = clean(2, 3);
        raw.history[0][0] = Some(f64::NAN);
        assert!(matches!(validate_alpha_set(raw), Err(Error::MissingValues { .. })));
    }

    #[test]
    fn negative_turnover_is_rejected() {
        let mut raw = clean(2, 3);
        raw.turnovers = vec![0.5, -0.1];
        assert_eq!(
            validate_alpha_set(raw).unwrap_err(),
            Error::NegativeTurnover { index: 1, value: -0.1 }
        );
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let mut raw = clean(3, 3);
        raw.turnovers.pop();
        assert!(matches!(validate_alpha_set(raw), Err(Error::DimensionMismatch(_))));
        let mut raw = clean(3, 3);
        raw.history[2].pop();
        assert!(matches!(validate_alpha_set(raw), Err(Error::DimensionMismatch(_))));
        let mut raw = clean(2, 3);
        raw.labels[1] = "a0".into();
        assert!(matches!(validate_alpha_set(raw), Err(Error::DuplicateLabel(_))));
    }

    #[test]
    fn normalize_examples() {
        let (w, s) = normalize_weights(&[0.85, -0.20]).unwrap();
        assert!((s - 1.05).abs() < 1e-15);
        assert!((w[0] - 0.85 / 1.05).abs() < 1e-15);
        assert!((w[1] + 0.20 / 1.05).abs() < 1e-15);
        assert!((w[0] - 0.809_523_809_523_809_5).abs() < 1e-12);

        let (w, s) = normalize_weights(&[0.6, -0.4]).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(w, vec![0.6, -0.4]);

        assert_eq!(normalize_weights(&[0.0, 0.0]).unwrap_err(), Error::AllZeroWeights);
    }

    fn single_stream() -> AlphaSet {
        validate_alpha_set(AlphaSetCandidate {
            labels: vec!["x".into()],
            history: vec![vec![Some(0.1)], vec![Some(0.05)], vec![Some(0.2)]],
            turnovers: vec![1.0],
            alphas: None,
        })
        .unwrap()
    }

    #[test]
    fn pnl_single_stream_with_impact() {
        let set = single_stream();
        let spec = CostSpec {
            linear_coeff: 0.01,
            impact_coeff: 0.001,
            impact_exponent: 2.0,
            investment: 90.0,
            rho_star_override: None,
        };
        let risk = DMatrix::from_element(1, 1, 0.04);
        let report = evaluate_pnl(&set, &[1.0], &spec, 1.0, &risk).unwrap();
        assert!((report.pnl - 4.05).abs() < 1e-12);
        assert!((report.impact_cost_total - 4.05).abs() < 1e-12);
        assert!((report.linear_cost_total - 0.9).abs() < 1e-12);
        assert!((report.volatility - 90.0 * 0.2).abs() < 1e-12);
        assert!((report.sharpe - 4.05 / 18.0).abs() < 1e-12);
        assert_eq!(report.dollar_turnover, 90.0);
    }

    #[test]
    fn pnl_without_costs_is_gross() {
        let set = validate_alpha_set(AlphaSetCandidate {
            labels: vec!["a".into(), "b".into()],
            history: vec![vec![Some(0.3), Some(-0.1)], vec![Some(0.1), Some(0.2)]],
            turnovers: vec![0.4, 0.9],
            alphas: None,
        })
        .unwrap();
        let spec = CostSpec::default().with_investment(1000.0);
        let risk = DMatrix::identity(2, 2);
        let r = evaluate_pnl(&set, &[0.7, -0.3], &spec, 0.8, &risk).unwrap();
        assert!((r.pnl - 1000.0 * (0.3 * 0.7 + 0.1 * 0.3)).abs() < 1e-12);
        assert_eq!(r.impact_cost_total, 0.0);
        assert!((r.turnover - 0.8 * (0.4 * 0.7 + 0.9 * 0.3)).abs() < 1e-15);
        assert!((r.dollar_turnover - 1000.0 * r.turnover).abs() < 1e-12);
    }

    #[test]
    fn zero_volatility_is_an_error() {
        let set = single_stream();
        let risk = DMatrix::zeros(1, 1);
        assert_eq!(
            evaluate_pnl(&set, &[1.0], &CostSpec::default(), 1.0, &risk).unwrap_err(),
            Error::ZeroVolatility
        );
    }

    #[test]
    fn identical_turnovers_make_impact_constant() {
        let set = validate_alpha_set(AlphaSetCandidate {
            labels: vec!["a".into(), "b".into(), "c".into()],
            history: vec![vec![Some(0.3), Some(-0.1), Some(0.05)], vec![Some(0.1), Some(0.2), Some(0.0)]],
            turnovers: vec![0.7; 3],
            alphas: None,
        })
        .unwrap();
        let spec = CostSpec {
            linear_coeff: 0.002,
            impact_coeff: 1e-4,
            impact_exponent: 1.5,
            investment: 500.0,
            rho_star_override: None,
        };
        let risk = DMatrix::identity(3, 3);
        let expected = 1e-4 * (500.0_f64 * 0.6).powf(1.5) / 1.5 * 0.7_f64.powf(1.5);
        for w in [[1.0, 0.0, 0.0], [0.2, -0.5, 0.3], [-0.1, -0.1, 0.8]] {
            let r = evaluate_pnl(&set, &w, &spec, 0.6, &risk).unwrap();
            assert!((r.impact_cost_total - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn cost_spec_validation() {
        assert!(CostSpec::default().validate().is_ok());
        let mut s = CostSpec::linear(0.01);
        s.impact_coeff = 1.0;
        s.impact_exponent = 1.0;
        assert!(s.validate().is_err());
        let mut s = CostSpec::default();
        s.rho_star_override = Some(1.5);
        assert!(s.validate().is_err());
        assert!(CostSpec::default().with_investment(0.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(w in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            prop_assume!(l1_norm(&w) > 1e-9);
            let (once, _) = normalize_weights(&w).unwrap();
            let (twice, s2) = normalize_weights(&once).unwrap();
            prop_assert!((s2 - 1.0).abs() < 1e-12);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-15);
                prop_assert_eq!(sign(*a), sign(*b));
            }
        }

        #[test]
        fn sharpe_is_scale_invariant_without_impact(
            w in proptest::collection::vec(-1.0f64..1.0, 3),
            zeta in 0.1f64..10.0,
        ) {
            prop_assume!(l1_norm(&w) > 1e-3);
            let set = validate_alpha_set(AlphaSetCandidate {
                labels: vec!["a".into(), "b".into(), "c".into()],
                history: vec![vec![Some(0.3), Some(-0.1), Some(0.05)], vec![Some(0.1), Some(0.2), Some(0.0)]],
                turnovers: vec![0.2, 0.5, 1.0],
                alphas: None,
            }).unwrap();
            let risk = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 1.5]);
            let spec = CostSpec::linear(0.01).with_investment(100.0);
            let (a, _) = normalize_weights(&w).unwrap();
            let scaled: Vec<f64> = w.iter().map(|x| x * zeta).collect();
            let (b, _) = normalize_weights(&scaled).unwrap();
            let ra = evaluate_pnl(&set, &a, &spec, 0.7, &risk).unwrap();
            let rb = evaluate_pnl(&set, &b, &spec, 0.7, &risk).unwrap();
            prop_assert!((ra.sharpe - rb.sharpe).abs() < 1e-12 * ra.sharpe.abs().max(1.0));
        }
    }
}
