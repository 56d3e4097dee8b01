//! Sharpe-optimal allocation across alpha streams that trade on one
//! execution platform, where opposite trades between streams are crossed
//! internally.
//!
//! The pipeline is: validate an [`AlphaSet`], estimate its covariance
//! ([`covariance`]), derive the turnover reduction `rho*` and per-stream
//! linear costs ([`turnover`]), and solve for weights with
//! [`optimizer::solve_with_rho_star_loop`]. Impact is handled through an
//! effective linear cost ([`impact`]); singular covariances go through the
//! regression limit ([`regression`]). [`oracle`] holds independent
//! brute-force checks.

pub mod covariance;
pub mod error;
pub mod impact;
mod linalg;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod regression;
pub mod turnover;

pub use covariance::{CovEstimate, FactorModel, FactorModelSource, PcaSource, Provenance};
pub use error::{Error, Result};
pub use model::{
    evaluate_pnl, normalize_weights, validate_alpha_set, AlphaSet, AlphaSetCandidate, Allocation, CostSpec,
    Diagnostics, PnlReport,
};
pub use optimizer::{SolveOptions, solve_linear_cost, solve_no_cost, solve_with_rho_star_loop};
