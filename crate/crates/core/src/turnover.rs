//! Turnover reduction from internal crossing and the resulting per-stream
//! linear costs.
//!
//! The spectral estimate of the reduction coefficient is
//! `rho* = psi_1 / (N sqrt N) * |sum_i V_i|`, where `psi_1` is the largest
//! eigenvalue of the correlation matrix and `V` its unit eigenvector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, restrict_square, sorted_eigen};
use crate::model::{AlphaSet, CostSpec};

/// Lower clamp for the spectral estimate.
pub const RHO_STAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSource {
    Spectral,
    Override,
    NoCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverModel {
    pub rho_star: f64,
    pub source: RhoSource,
    /// Stream indices the coefficient was computed over.
    pub universe: Vec<usize>,
    pub leading_eigenvalue: Option<f64>,
    pub eigenvector_sum: Option<f64>,
    /// Formula value before clamping.
    pub raw_value: Option<f64>,
    pub clamped_high: bool,
    pub clamped_low: bool,
    /// Leading eigenvalue is repeated; the eigenvector is then only
    /// determined by the deterministic tie-breaking.
    pub degenerate: bool,
}

impl TurnoverModel {
    pub fn no_crossing(universe: Vec<usize>) -> Self {
        TurnoverModel::fixed(1.0, RhoSource::NoCrossing, universe)
    }

    pub fn overridden(rho_star: f64, universe: Vec<usize>) -> Result<Self> {
        if !(rho_star > 0.0 && rho_star <= 1.0) {
            return Err(Error::InvalidOption(format!("rho_star {rho_star} outside (0, 1]")));
        }
        Ok(TurnoverModel::fixed(rho_star, RhoSource::Override, universe))
    }

    fn fixed(rho_star: f64, source: RhoSource, universe: Vec<usize>) -> Self {
        TurnoverModel {
            rho_star,
            source,
            universe,
            leading_eigenvalue: None,
            eigenvector_sum: None,
            raw_value: None,
            clamped_high: false,
            clamped_low: false,
            degenerate: false,
        }
    }
}

/// Spectral turnover-reduction coefficient of a full correlation matrix.
pub fn spectral_rho_star(corr: &DMatrix<f64>) -> Result<TurnoverModel> {
    let n = corr.nrows();
    if n == 0 || !corr.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "correlation matrix is {}x{}",
            corr.nrows(),
            corr.ncols()
        )));
    }
    if corr.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("correlation matrix".into()));
    }
    if !is_symmetric(corr, 1e-12) {
        return Err(Error::NotSymmetric);
    }
    if let Some(i) = (0..n).find(|&i| (corr[(i, i)] - 1.0).abs() > 1e-9) {
        return Err(Error::InvalidOption(format!(
            "correlation diagonal entry {i} is {}",
            corr[(i, i)]
        )));
    }
    let (values, vectors) = sorted_eigen(corr);
    let psi = values[0];
    if !(psi > 0.0) {
        return Err(Error::IndefiniteCorrelation(psi));
    }
    let degenerate = n > 1 && (values[0] - values[1]).abs() <= 1e-10 * psi;
    let sum = vectors.column(0).sum().abs();
    let nf = n as f64;
    let raw = psi / (nf * nf.sqrt()) * sum;
    let (rho_star, clamped_high, clamped_low) = if raw > 1.0 {
        // values within rounding of 1 (perfect correlation) are not flagged
        (1.0, raw > 1.0 + 1e-12, false)
    } else if raw < RHO_STAR_FLOOR {
        (RHO_STAR_FLOOR, false, true)
    } else {
        (raw, false, false)
    };
    Ok(TurnoverModel {
        rho_star,
        source: RhoSource::Spectral,
        universe: (0..n).collect(),
        leading_eigenvalue: Some(psi),
        eigenvector_sum: Some(sum),
        raw_value: Some(raw),
        clamped_high,
        clamped_low,
        degenerate,
    })
}

/// Spectral coefficient over the streams in `universe`.
pub fn spectral_rho_star_on(corr: &DMatrix<f64>, universe: &[usize]) -> Result<TurnoverModel> {
    let mut model = spectral_rho_star(&restrict_square(corr, universe))?;
    model.universe = universe.to_vec();
    Ok(model)
}

/// The override from `cost_spec` when present, otherwise the spectral
/// estimate over `universe`.
pub fn resolve_rho_star(corr: &DMatrix<f64>, universe: &[usize], cost_spec: &CostSpec) -> Result<TurnoverModel> {
    match cost_spec.rho_star_override {
        Some(rho) => TurnoverModel::overridden(rho, universe.to_vec()),
        None => spectral_rho_star_on(corr, universe),
    }
}

/// Sample correlation of an alpha set's history.
pub fn correlation_of(alpha_set: &AlphaSet) -> Result<DMatrix<f64>> {
    if alpha_set.len() == 1 {
        return Ok(DMatrix::identity(1, 1));
    }
    Ok(crate::covariance::sample_covariance(alpha_set.history())?.corr)
}

/// `T = rho* sum_i tau_i |w_i|`.
pub fn effective_turnover(turnovers: &[f64], weights: &[f64], rho_star: f64) -> f64 {
    rho_star * turnovers.iter().zip(weights).map(|(t, w)| t * w.abs()).sum::<f64>()
}

/// `L_i = L rho* tau_i`.
pub fn linear_cost_vector(cost_spec: &CostSpec, turnovers: &[f64], rho_star: f64) -> Vec<f64> {
    turnovers
        .iter()
        .map(|t| cost_spec.linear_coeff * rho_star * t)
        .collect()
}

/// Sample skewness of the turnovers; `None` for fewer than three streams or
/// identical turnovers. The linear turnover model assumes this is small.
pub fn turnover_skewness(turnovers: &[f64]) -> Option<f64> {
    let n = turnovers.len();
    if n < 3 {
        return None;
    }
    let mean = turnovers.iter().sum::<f64>() / n as f64;
    let m2 = turnovers.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
    if m2 <= 1e-300 {
        return None;
    }
    let m3 = turnovers.iter().map(|t| (t - mean).powi(3)).sum::<f64>() / n as f64;
    Some(m3 / m2.powf(1.5))
}
