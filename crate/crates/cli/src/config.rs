//! Run configuration read from a JSON file. Every section is optional and
//! unknown keys are rejected.

use std::path::Path;

use alphacross_core::impact::CapacityOptions;
use alphacross_core::regression::DEFAULT_ZETAS;
use alphacross_core::{CostSpec, Error, SolveOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub costs: CostSpec,
    pub solver: SolveOptions,
    pub capacity: CapacityOptions,
    pub regression: RegressionConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionConfig {
    /// Specific-risk scalings for the limit check, largest first.
    pub zetas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Tolerance for the stationarity and cost-slack certificate.
    pub tolerance: f64,
    /// Seed for the randomized descent check.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            costs: CostSpec::default(),
            solver: SolveOptions::default(),
            capacity: CapacityOptions::default(),
            regression: RegressionConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            zetas: DEFAULT_ZETAS.to_vec(),
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { tolerance: 1e-9, seed: 0 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> alphacross_core::Result<()> {
        self.costs.validate()?;
        self.solver.validate()?;
        self.capacity.validate()?;
        let z = &self.regression.zetas;
        if z.is_empty() || z.iter().any(|&v| !(v.is_finite() && v > 0.0)) || z.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidOption(
                "regression.zetas must be positive and strictly decreasing".into(),
            ));
        }
        if !(self.verify.tolerance.is_finite() && self.verify.tolerance > 0.0) {
            return Err(Error::InvalidOption("verify.tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Parses and validates the config at `path`, or returns the defaults.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
    config.validate().map_err(CliError::at(path))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"cost": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"costs": {"linear": 0.1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"solver": {"tol": 1}}"#).is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"costs": {"linear_coeff": 0.01}, "solver": {"line_search": false}}"#).unwrap();
        assert_eq!(c.costs.linear_coeff, 0.01);
        assert_eq!(c.costs.investment, 1.0);
        assert!(!c.solver.line_search);
        assert_eq!(c.solver.v_tolerance, SolveOptions::default().v_tolerance);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let c: RunConfig = serde_json::from_str(r#"{"costs": {"impact_coeff": 1, "impact_exponent": 1}}"#).unwrap();
        assert!(c.validate().is_err());
        for zetas in ["[]", "[1, 1]", "[0.1, 1]", "[-1]"] {
            let c: RunConfig = serde_json::from_str(&format!(r#"{{"regression": {{"zetas": {zetas}}}}}"#)).unwrap();
            assert!(c.validate().is_err(), "{zetas}");
        }
    }
}
