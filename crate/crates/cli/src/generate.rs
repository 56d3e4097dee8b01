//! Synthetic alpha universes with known correlation structure.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::report::{sig, to_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// Every pair of streams has correlation `rho`.
    Uniform,
    /// Random loadings on `factors` independent unit-variance factors.
    Factor,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorParams {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub structure: Structure,
    pub rho: f64,
    pub factors: usize,
    pub vol: f64,
    pub alpha_mean: f64,
    pub alpha_spread: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl GeneratorParams {
    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: &str| Err(CliError::Usage(m.into()));
        if self.n == 0 || self.m == 0 {
            return fail("--n and --m must be at least 1");
        }
        match self.structure {
            Structure::Uniform if self.factors != 0 => return fail("--factors requires --structure factor"),
            Structure::Uniform if !(0.0..1.0).contains(&self.rho) => return fail("--rho must lie in [0, 1)"),
            Structure::Factor if self.factors == 0 => return fail("--structure factor needs --factors >= 1"),
            _ => {}
        }
        if !(self.vol.is_finite() && self.vol > 0.0) {
            return fail("--vol must be positive");
        }
        if !(self.alpha_mean.is_finite() && self.alpha_spread.is_finite() && self.alpha_spread >= 0.0) {
            return fail("--alpha-mean must be finite and --alpha-spread non-negative");
        }
        if !(self.tau_min >= 0.0 && self.tau_max >= self.tau_min && self.tau_max.is_finite()) {
            return fail("turnover range must satisfy 0 <= tau-min <= tau-max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub params: GeneratorParams,
    pub labels: Vec<String>,
    /// Mean of each stream's history.
    pub means: Vec<f64>,
    /// Per-stream volatility scale.
    pub vols: Vec<f64>,
    pub turnovers: Vec<f64>,
    /// `N x F` loadings of the factor structure, empty for uniform.
    pub loadings: Vec<Vec<f64>>,
}

pub struct Generated {
    pub truth: GroundTruth,
    /// `(M+1) x N`, first row most recent.
    pub history: Vec<Vec<f64>>,
}

pub fn labels(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("alpha{i:0width$}")).collect()
}

pub fn generate(params: &GeneratorParams) -> CliResult<Generated> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let n = params.n;
    let means: Vec<f64> = (0..n).map(|_| params.alpha_mean + params.alpha_spread * normal()).collect();
    let loadings: Vec<Vec<f64>> = match params.structure {
        Structure::Uniform => vec![],
        Structure::Factor => (0..n)
            .map(|_| (0..params.factors).map(|_| normal()).collect())
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    let vols: Vec<f64> = (0..n).map(|_| params.vol * rng.random_range(0.5..1.5)).collect();
    let turnovers: Vec<f64> = (0..n)
        .map(|_| {
            if params.tau_max > params.tau_min {
                rng.random_range(params.tau_min..params.tau_max)
            } else {
                params.tau_min
            }
        })
        .collect();
    let history = (0..=params.m)
        .map(|_| {
            let common: Vec<f64> = match params.structure {
                Structure::Uniform => vec![rng.sample(StandardNormal)],
                Structure::Factor => (0..params.factors).map(|_| rng.sample(StandardNormal)).collect(),
            };
            (0..n)
                .map(|i| {
                    let e: f64 = rng.sample(StandardNormal);
                    let x = match params.structure {
                        Structure::Uniform => params.rho.sqrt() * common[0] + (1.0 - params.rho).sqrt() * e,
                        Structure::Factor => loadings[i].iter().zip(&common).map(|(b, f)| b * f).sum::<f64>() + e,
                    };
                    means[i] + vols[i] * x
                })
                .collect()
        })
        .collect();
    Ok(Generated {
        truth: GroundTruth {
            params: params.clone(),
            labels: labels(n),
            means,
            vols,
            turnovers,
            loadings,
        },
        history,
    })
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let err = |e: csv::Error| CliError::input(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::input(path, e))
}

/// Writes `history.csv`, `turnovers.csv` and `truth.json` into `dir`.
pub fn write_outputs(g: &Generated, dir: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(dir, e))?;
    let labels = &g.truth.labels;
    let history = dir.join("history.csv");
    let header: Vec<String> = std::iter::once("t".to_string()).chain(labels.iter().cloned()).collect();
    write_csv(
        &history,
        &header,
        g.history
            .iter()
            .enumerate()
            .map(|(s, row)| std::iter::once(s.to_string()).chain(row.iter().map(|&x| sig(x))).collect()),
    )?;
    let turnovers = dir.join("turnovers.csv");
    write_csv(
        &turnovers,
        &["label".into(), "tau".into()],
        labels
            .iter()
            .zip(&g.truth.turnovers)
            .map(|(l, &t)| vec![l.clone(), sig(t)]),
    )?;
    let truth = dir.join("truth.json");
    let text = serde_json::to_string_pretty(&to_json(&g.truth)).expect("truth serializes") + "\n";
    std::fs::write(&truth, text).map_err(|e| CliError::input(&truth, e))?;
    Ok(vec![history, turnovers, truth])
}
