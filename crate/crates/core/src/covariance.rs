//! Sample covariance estimates and factor-model risk representations.
//!
//! A [`FactorModel`] stores the specific variances `xi_i^2` and loadings
//! with the factor covariance already absorbed, so that the implied
//! covariance is `diag(xi^2) + L L^T`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, restrict_rows, restrict_square, sorted_eigen};

/// Eigenvalues at or below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub cov: DMatrix<f64>,
    pub vols: Vec<f64>,
    pub corr: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub rank_estimate: usize,
}

impl CovEstimate {
    /// Wraps a given covariance matrix, checking symmetry, positive
    /// diagonal and positive semi-definiteness up to [`RANK_TOLERANCE`].
    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariance".into()));
        }
        if !is_symmetric(&cov, 1e-12) {
            return Err(Error::NotSymmetric);
        }
        let n = cov.nrows();
        let cov = DMatrix::from_fn(n, n, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
        let vols: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
        if let Some(index) = vols.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::ZeroVarianceStream { index });
        }
        let corr = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                cov[(i, j)] / (vols[i] * vols[j])
            }
        });
        let (eigenvalues, eigenvectors) = sorted_eigen(&cov);
        let top = eigenvalues.first().copied().unwrap_or(0.0);
        let min = eigenvalues.last().copied().unwrap_or(0.0);
        if min < -RANK_TOLERANCE * top {
            return Err(Error::IndefiniteCovariance { min_eigenvalue: min });
        }
        let rank_estimate = eigenvalues.iter().filter(|&&e| e > RANK_TOLERANCE * top).count();
        Ok(CovEstimate {
            cov,
            vols,
            corr,
            eigenvalues,
            eigenvectors,
            rank_estimate,
        })
    }

    pub fn len(&self) -> usize {
        self.vols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vols.is_empty()
    }

    /// Covariance estimate of the streams in `indices`.
    pub fn restrict(&self, indices: &[usize]) -> Result<CovEstimate> {
        CovEstimate::from_covariance(restrict_square(&self.cov, indices))
    }
}

/// Unbiased sample covariance of the history columns (divisor `rows - 1`).
pub fn sample_covariance(history: &DMatrix<f64>) -> Result<CovEstimate> {
    let rows = history.nrows();
    let n = history.ncols();
    if rows < 2 {
        return Err(Error::DimensionMismatch(format!(
            "need at least 2 observations, got {rows}"
        )));
    }
    // column-major storage
    if let Some(k) = history.iter().position(|x| !x.is_finite()) {
        return Err(Error::MissingValues {
            row: k % rows,
            column: k / rows,
        });
    }
    let mut centered = history.clone();
    for c in 0..n {
        let mut col = centered.column_mut(c);
        let mean = col.sum() / rows as f64;
        col.add_scalar_mut(-mean);
        let spread = col.amax();
        let magnitude = history.column(c).amax();
        if spread <= 1e-12 * magnitude || spread == 0.0 {
            return Err(Error::ZeroVarianceStream { index: c });
        }
    }
    let denom = (rows - 1) as f64;
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = centered.column(i).dot(&centered.column(j)) / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    CovEstimate::from_covariance(cov)
}

/// Lower-triangular `T` with `T T^T = phi`.
pub fn cholesky_factor(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !phi.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "factor covariance is {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    if phi.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if !is_symmetric(phi, 1e-12) {
        return Err(Error::NotSymmetric);
    }
    let chol = phi.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.l())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    UserSupplied,
    PcaDerived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    specific_var: Vec<f64>,
    loadings: DMatrix<f64>,
    provenance: Provenance,
}

impl FactorModel {
    /// Factor model from combined loadings (factor covariance absorbed).
    pub fn new(specific_var: Vec<f64>, loadings: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if loadings.nrows() != specific_var.len() {
            return Err(Error::DimensionMismatch(format!(
                "loadings have {} rows for {} specific variances",
                loadings.nrows(),
                specific_var.len()
            )));
        }
        if loadings.ncols() > specific_var.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} factors exceed {} streams",
                loadings.ncols(),
                specific_var.len()
            )));
        }
        if let Some(i) = specific_var.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::InvalidOption(format!(
                "specific variance of stream {i} must be positive, got {}",
                specific_var[i]
            )));
        }
        if loadings.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("factor loadings".into()));
        }
        Ok(FactorModel {
            specific_var,
            loadings,
            provenance,
        })
    }

    /// Pure specific risk, no factors.
    pub fn diagonal(specific_var: Vec<f64>) -> Result<Self> {
        let n = specific_var.len();
        FactorModel::new(specific_var, DMatrix::zeros(n, 0), Provenance::UserSupplied)
    }

    pub fn num_streams(&self) -> usize {
        self.specific_var.len()
    }

    pub fn num_factors(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn specific_var(&self) -> &[f64] {
        &self.specific_var
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `diag(xi^2) + L L^T`.
    pub fn implied_covariance(&self) -> DMatrix<f64> {
        let mut gamma = &self.loadings * self.loadings.transpose();
        for (i, v) in self.specific_var.iter().enumerate() {
            gamma[(i, i)] += v;
        }
        gamma
    }

    pub fn restrict(&self, indices: &[usize]) -> FactorModel {
        FactorModel {
            specific_var: indices.iter().map(|&i| self.specific_var[i]).collect(),
            loadings: restrict_rows(&self.loadings, indices),
            provenance: self.provenance,
        }
    }

    /// Same loadings with every specific variance multiplied by `zeta`.
    pub fn scale_specific(&self, zeta: f64) -> Result<FactorModel> {
        FactorModel::new(
            self.specific_var.iter().map(|v| v * zeta).collect(),
            self.loadings.clone(),
            self.provenance,
        )
    }
}

/// Factor model `diag(xi2) + omega phi omega^T`, absorbing `phi` through its
/// Cholesky factor.
pub fn build_factor_model(omega: &DMatrix<f64>, phi: &DMatrix<f64>, xi2: &[f64]) -> Result<FactorModel> {
    if omega.nrows() != xi2.len() {
        return Err(Error::DimensionMismatch(format!(
            "omega has {} rows for {} streams",
            omega.nrows(),
            xi2.len()
        )));
    }
    if omega.ncols() != phi.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "omega has {} columns but phi is {}x{}",
            omega.ncols(),
            phi.nrows(),
            phi.ncols()
        )));
    }
    let tri = cholesky_factor(phi)?;
    FactorModel::new(xi2.to_vec(), omega * tri, Provenance::UserSupplied)
}

/// Principal-component factor model: loadings `sqrt(e_A) P_A` for the top
/// `num_factors` eigenpairs and specific variance `C_ii`.
///
/// Since the specific variance keeps the full diagonal, the implied
/// diagonal `C_ii + sum_A e_A P_iA^2` exceeds `C_ii`.
pub fn pca_factor_model(cov: &CovEstimate, num_factors: usize) -> Result<FactorModel> {
    if num_factors > cov.rank_estimate {
        return Err(Error::RankDeficient {
            requested: num_factors,
            rank: cov.rank_estimate,
        });
    }
    let n = cov.len();
    let loadings = DMatrix::from_fn(n, num_factors, |i, a| {
        cov.eigenvalues[a].sqrt() * cov.eigenvectors[(i, a)]
    });
    let specific = (0..n).map(|i| cov.cov[(i, i)]).collect();
    FactorModel::new(specific, loadings, Provenance::PcaDerived)
}

/// Builds the factor model for a sub-universe of streams; used when the
/// active universe shrinks between rounds.
pub trait FactorModelSource {
    fn build(&self, universe: &[usize]) -> Result<FactorModel>;
}

impl FactorModelSource for FactorModel {
    fn build(&self, universe: &[usize]) -> Result<FactorModel> {
        Ok(self.restrict(universe))
    }
}

impl<F> FactorModelSource for F
where
    F: Fn(&[usize]) -> Result<FactorModel>,
{
    fn build(&self, universe: &[usize]) -> Result<FactorModel> {
        self(universe)
    }
}

/// Principal-component models re-estimated on each sub-universe.
#[derive(Debug, Clone)]
pub struct PcaSource {
    pub cov: CovEstimate,
    /// Capped at the rank of each restricted covariance; `None` keeps
    /// every non-zero eigenvalue.
    pub num_factors: Option<usize>,
}

impl FactorModelSource for PcaSource {
    fn build(&self, universe: &[usize]) -> Result<FactorModel> {
        let sub = self.cov.restrict(universe)?;
        let f = self
            .num_factors
            .unwrap_or(sub.rank_estimate)
            .min(sub.rank_estimate);
        pca_factor_model(&sub, f)
    }
}
