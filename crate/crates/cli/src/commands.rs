//! One function per subcommand. Each returns the text report and the JSON
//! document; `main` decides where they go.

use std::path::Path;

use alphacross_core::covariance::{sample_covariance, CovEstimate};
use alphacross_core::impact::{effective_linear_costs, find_capacity, solve_with_impact, ImpactSpec};
use alphacross_core::optimizer::{verify_global_optimum, ConditionReport};
use alphacross_core::oracle::{brute_force_solve, numeric_descent_check, DescentReport};
use alphacross_core::regression::{
    factor_exposure, limit_consistency_check, limit_consistency_check_with_costs, regression_limit_weights,
    regression_with_costs, ConvergenceReport, RegressionSpec,
};
use alphacross_core::turnover::{correlation_of, resolve_rho_star, spectral_rho_star};
use alphacross_core::{
    evaluate_pnl, normalize_weights, solve_linear_cost, solve_no_cost, AlphaSet, Allocation, CostSpec, Diagnostics,
    Error, FactorModel, FactorModelSource, PcaSource, PnlReport, SolveOptions,
};
use serde::Serialize;
use serde_json::Value;

use crate::args::{
    CapacityArgs, GenerateArgs, ModelKind, OptimizeArgs, OracleArgs, RegressArgs, RhoStarArgs, UniverseArgs,
};
use crate::config::{load_config, RunConfig};
use crate::error::{CliError, CliResult};
use crate::generate::{generate, write_outputs, GeneratorParams};
use crate::input::{load_alpha_set, read_correlation, read_factor_file};
use crate::report::{opt, pairs, sig, to_json, Table};

pub struct Output {
    pub text: String,
    pub json: Value,
    /// Reported after the output is written.
    pub failure: Option<CliError>,
}

impl Output {
    fn ok(text: String, json: Value) -> Self {
        Output {
            text,
            json,
            failure: None,
        }
    }
}

enum Source {
    Pca(PcaSource),
    File(FactorModel),
}

impl FactorModelSource for Source {
    fn build(&self, universe: &[usize]) -> alphacross_core::Result<FactorModel> {
        match self {
            Source::Pca(p) => p.build(universe),
            Source::File(f) => f.build(universe),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ModelInfo {
    kind: &'static str,
    factors: usize,
}

struct Universe {
    config: RunConfig,
    set: AlphaSet,
    source: Source,
    full: FactorModel,
    model: ModelInfo,
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Default principal-component count for the optimizer.
fn optimizer_factors(cov: &CovEstimate) -> usize {
    let root = (cov.len() as f64).sqrt().ceil() as usize;
    cov.rank_estimate.min(root)
}

/// The regression pathway keeps every non-zero eigenvalue of a singular
/// covariance; a full-rank covariance would leave no residual.
fn regression_factors(cov: &CovEstimate) -> usize {
    if cov.rank_estimate < cov.len() {
        cov.rank_estimate
    } else {
        optimizer_factors(cov)
    }
}

fn load_universe(args: &UniverseArgs, default_factors: fn(&CovEstimate) -> usize) -> CliResult<Universe> {
    let config = load_config(args.config.as_deref())?;
    match (args.factor_model, &args.factor_file, args.factors) {
        (ModelKind::File, None, _) => return Err(CliError::Usage("--factor-model file needs --factor-file".into())),
        (ModelKind::Pca, Some(_), _) => {
            return Err(CliError::Usage("--factor-file requires --factor-model file".into()))
        }
        (ModelKind::File, _, Some(_)) => return Err(CliError::Usage("--factors applies to --factor-model pca".into())),
        _ => {}
    }
    let set = load_alpha_set(&args.alphas, args.turnovers.as_deref(), args.expected.as_deref())?;
    let source = match args.factor_model {
        ModelKind::Pca => {
            let cov = sample_covariance(set.history()).map_err(CliError::at(&args.alphas))?;
            let factors = match args.factors {
                Some(f) if f > cov.rank_estimate => {
                    return Err(Error::RankDeficient {
                        requested: f,
                        rank: cov.rank_estimate,
                    }
                    .into())
                }
                Some(f) => f,
                None => default_factors(&cov),
            };
            Source::Pca(PcaSource {
                cov,
                num_factors: Some(factors),
            })
        }
        ModelKind::File => {
            let path = args.factor_file.as_deref().expect("checked above");
            Source::File(read_factor_file(path, set.len())?)
        }
    };
    let full = source.build(&all(set.len()))?;
    let model = ModelInfo {
        kind: match args.factor_model {
            ModelKind::Pca => "pca",
            ModelKind::File => "file",
        },
        factors: full.num_factors(),
    };
    Ok(Universe {
        config,
        set,
        source,
        full,
        model,
    })
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::input(path, e))
}

#[derive(Debug, Serialize)]
struct StreamRow {
    label: String,
    alpha: f64,
    turnover: f64,
    cost: f64,
    weight: f64,
    sign: i8,
}

fn stream_rows(set: &AlphaSet, alloc: &Allocation) -> Vec<StreamRow> {
    (0..set.len())
        .map(|i| StreamRow {
            label: set.labels()[i].clone(),
            alpha: set.alphas()[i],
            turnover: set.turnovers()[i],
            cost: alloc.effective_costs.get(i).copied().unwrap_or(0.0),
            weight: alloc.weights[i],
            sign: alloc.signs[i],
        })
        .collect()
}

fn stream_table(rows: &[StreamRow]) -> String {
    let mut t = Table::new(&["stream", "alpha", "tau", "cost", "weight", "sign"]);
    for r in rows {
        t.row(vec![
            r.label.clone(),
            sig(r.alpha),
            sig(r.turnover),
            sig(r.cost),
            sig(r.weight),
            r.sign.to_string(),
        ]);
    }
    t.render()
}

fn pnl_table(p: &PnlReport) -> String {
    pairs(&[
        ("pnl", sig(p.pnl)),
        ("volatility", sig(p.volatility)),
        ("sharpe", sig(p.sharpe)),
        ("linear cost", sig(p.linear_cost_total)),
        ("impact cost", sig(p.impact_cost_total)),
        ("impact cost (expansion)", opt(p.impact_cost_approx)),
        ("dollar turnover", sig(p.dollar_turnover)),
        ("turnover", sig(p.turnover)),
    ])
}

fn labels_of(set: &AlphaSet, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| set.labels()[i].clone()).collect()
}

fn notes_text(notes: &[String]) -> String {
    notes.iter().map(|n| format!("note: {n}\n")).collect()
}

/// Certificate over the universe the last solve ran on.
fn certify(u: &Universe, alloc: &Allocation, universe: &[usize], tolerance: f64) -> CliResult<ConditionReport> {
    let pick = |v: &[f64]| -> Vec<f64> { universe.iter().map(|&i| v[i]).collect() };
    let sub = Allocation {
        weights: pick(&alloc.weights),
        signs: universe.iter().map(|&i| alloc.signs[i]).collect(),
        active: vec![],
        inactive: vec![],
        lambda: alloc.lambda,
        rho_star: alloc.rho_star,
        effective_costs: vec![],
        diagnostics: Diagnostics::default(),
    };
    let fm = u.source.build(universe)?;
    let costs = if alloc.effective_costs.is_empty() {
        vec![0.0; universe.len()]
    } else {
        pick(&alloc.effective_costs)
    };
    Ok(verify_global_optimum(
        &sub,
        &fm,
        &pick(u.set.alphas()),
        &costs,
        alloc.lambda,
        tolerance,
    ))
}

#[derive(Debug, Serialize)]
struct OptimizeReport<'a> {
    command: &'static str,
    factor_model: ModelInfo,
    no_cost: bool,
    outer_loop: bool,
    streams: Vec<StreamRow>,
    active: Vec<String>,
    inactive: Vec<String>,
    lambda: f64,
    rho_star: f64,
    diagnostics: &'a Diagnostics,
    pnl: &'a PnlReport,
    impact: Option<&'a ImpactSpec>,
    conditions: ConditionReport,
}

pub fn optimize(args: &OptimizeArgs) -> CliResult<Output> {
    let mut u = load_universe(&args.universe, optimizer_factors)?;
    if args.outer_loop {
        u.config.solver.outer_loop = true;
    }
    if args.no_outer_loop {
        u.config.solver.outer_loop = false;
    }
    let n = u.set.len();
    let (alloc, pnl, impact, universe) = if args.no_cost {
        let costs = CostSpec {
            linear_coeff: 0.0,
            impact_coeff: 0.0,
            ..u.config.costs
        };
        let cov = u.full.implied_covariance();
        let mut alloc = solve_no_cost(u.set.alphas(), &cov)?;
        let rho = resolve_rho_star(&correlation_of(&u.set)?, &all(n), &costs)?.rho_star;
        alloc.rho_star = Some(rho);
        alloc.effective_costs = vec![0.0; n];
        let pnl = evaluate_pnl(&u.set, &alloc.weights, &costs, rho, &cov)?;
        (alloc, pnl, None, all(n))
    } else {
        let sol = solve_with_impact(&u.set, &u.source, &u.config.costs, &u.config.solver)?;
        let universe = if u.config.solver.outer_loop {
            sol.allocation.active.clone()
        } else {
            all(n)
        };
        let impact = (u.config.costs.impact_coeff > 0.0).then_some(sol.spec);
        (sol.allocation, sol.pnl, impact, universe)
    };
    let conditions = certify(&u, &alloc, &universe, u.config.verify.tolerance)?;
    let rho = alloc.rho_star.unwrap_or(1.0);
    let report = OptimizeReport {
        command: "optimize",
        factor_model: u.model.clone(),
        no_cost: args.no_cost,
        outer_loop: u.config.solver.outer_loop && !args.no_cost,
        streams: stream_rows(&u.set, &alloc),
        active: labels_of(&u.set, &alloc.active),
        inactive: labels_of(&u.set, &alloc.inactive),
        lambda: alloc.lambda,
        rho_star: rho,
        diagnostics: &alloc.diagnostics,
        pnl: &pnl,
        impact: impact.as_ref(),
        conditions,
    };
    let d = &alloc.diagnostics;
    let c = &report.conditions;
    let mut text = format!(
        "optimize: {n} streams, factor model {} ({} factors)\n",
        u.model.kind, u.model.factors
    );
    text += &pairs(&[
        ("rho*", sig(rho)),
        ("lambda", sig(alloc.lambda)),
        ("objective", sig(d.objective)),
        ("inner iterations", d.inner_iterations.to_string()),
        ("damped steps", d.damped_steps.to_string()),
        ("outer rounds", d.outer_rounds.to_string()),
    ]);
    text += "\n";
    text += &stream_table(&report.streams);
    text += &format!("inactive: [{}]\n\n", report.inactive.join(", "));
    text += &pnl_table(&pnl);
    text += "\n";
    text += &pairs(&[
        ("stationarity residual", sig(c.max_stationarity_residual)),
        ("min cost slack", opt(c.min_cost_slack)),
        ("sign consistent", c.sign_consistent.to_string()),
        ("certificate", if c.passed { "PASS".into() } else { "FAIL".into() }),
    ]);
    text += &notes_text(&d.notes);
    Ok(Output::ok(text, to_json(&report)))
}

#[derive(Debug, Serialize)]
struct RhoStarReport {
    command: &'static str,
    labels: Vec<String>,
    rho_star: f64,
    raw_value: Option<f64>,
    leading_eigenvalue: Option<f64>,
    eigenvector_sum: Option<f64>,
    degenerate: bool,
    clamped_high: bool,
    clamped_low: bool,
}

pub fn rho_star(args: &RhoStarArgs) -> CliResult<Output> {
    let (labels, corr, path) = match (&args.alphas, &args.correlation) {
        (Some(p), _) => {
            let set = load_alpha_set(p, None, None)?;
            let corr = correlation_of(&set).map_err(CliError::at(p))?;
            (set.labels().to_vec(), corr, p)
        }
        (None, Some(p)) => {
            let (labels, corr) = read_correlation(p)?;
            (labels, corr, p)
        }
        (None, None) => return Err(CliError::Usage("give --alphas or --correlation".into())),
    };
    let m = spectral_rho_star(&corr).map_err(CliError::at(path))?;
    let report = RhoStarReport {
        command: "rho-star",
        labels,
        rho_star: m.rho_star,
        raw_value: m.raw_value,
        leading_eigenvalue: m.leading_eigenvalue,
        eigenvector_sum: m.eigenvector_sum,
        degenerate: m.degenerate,
        clamped_high: m.clamped_high,
        clamped_low: m.clamped_low,
    };
    let text = format!("rho-star: {} streams\n", report.labels.len())
        + &pairs(&[
            ("rho*", sig(m.rho_star)),
            ("unclamped value", opt(m.raw_value)),
            ("leading eigenvalue", opt(m.leading_eigenvalue)),
            ("|sum of leading eigenvector|", opt(m.eigenvector_sum)),
            ("degenerate", m.degenerate.to_string()),
            ("clamped high", m.clamped_high.to_string()),
            ("clamped low", m.clamped_low.to_string()),
        ]);
    Ok(Output::ok(text, to_json(&report)))
}

#[derive(Debug, Serialize)]
struct CapacityReport<'a> {
    command: &'static str,
    factor_model: ModelInfo,
    capacity: f64,
    pnl_at_capacity: f64,
    bracket: (f64, f64),
    /// The maximum sits at an end of the search range, so the true
    /// capacity may lie outside it.
    at_range_end: bool,
    curve_points: usize,
    streams: Vec<StreamRow>,
    pnl: &'a PnlReport,
}

pub fn capacity(args: &CapacityArgs) -> CliResult<Output> {
    let u = load_universe(&args.universe, optimizer_factors)?;
    let c = &u.config;
    let res = find_capacity(&u.set, &u.source, &c.costs, &c.solver, &c.capacity)?;
    let at = solve_with_impact(&u.set, &u.source, &c.costs.with_investment(res.capacity), &c.solver)?;
    if let Some(path) = &args.curve_out {
        let err = |e: csv::Error| CliError::input(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["investment", "pnl"]).map_err(err)?;
        for (i, p) in &res.curve {
            w.write_record([sig(*i), sig(*p)]).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::input(path, e))?;
    }
    let range = (c.capacity.min_investment, c.capacity.max_investment);
    let at_range_end = res.capacity <= range.0 * (1.0 + 1e-9) || res.capacity >= range.1 * (1.0 - 1e-9);
    let report = CapacityReport {
        command: "capacity",
        factor_model: u.model.clone(),
        capacity: res.capacity,
        pnl_at_capacity: res.pnl_at_capacity,
        bracket: res.bracket,
        at_range_end,
        curve_points: res.curve.len(),
        streams: stream_rows(&u.set, &at.allocation),
        pnl: &at.pnl,
    };
    let mut text = format!("capacity: {} streams\n", u.set.len());
    text += &pairs(&[
        ("capacity", sig(res.capacity)),
        ("pnl at capacity", sig(res.pnl_at_capacity)),
        ("bracket low", sig(res.bracket.0)),
        ("bracket high", sig(res.bracket.1)),
        ("curve points", res.curve.len().to_string()),
    ]);
    text += "\nallocation at capacity\n";
    text += &stream_table(&report.streams);
    text += "\n";
    text += &pnl_table(&at.pnl);
    text += &notes_text(&at.allocation.diagnostics.notes);
    if at_range_end {
        text += &format!(
            "warning: maximum at the end of the search range [{}, {}]; widen capacity.min_investment/max_investment\n",
            sig(range.0),
            sig(range.1)
        );
    }
    Ok(Output::ok(text, to_json(&report)))
}

#[derive(Debug, Serialize)]
struct RegressReport {
    command: &'static str,
    factor_model: ModelInfo,
    with_costs: bool,
    streams: Vec<StreamRow>,
    inactive: Vec<String>,
    factor_exposure: f64,
    limit_check: Option<ConvergenceReport>,
}

fn cost_vector(u: &Universe) -> CliResult<Vec<f64>> {
    let n = u.set.len();
    let rho = resolve_rho_star(&correlation_of(&u.set)?, &all(n), &u.config.costs)?.rho_star;
    let spec = effective_linear_costs(&u.config.costs, u.set.turnovers(), rho)?;
    Ok(if spec.uniform_turnover {
        spec.linear_costs
    } else {
        spec.effective_costs
    })
}

pub fn regress(args: &RegressArgs) -> CliResult<Output> {
    let u = load_universe(&args.universe, regression_factors)?;
    let spec = RegressionSpec::from_factor_model(&u.full)?;
    let alphas = u.set.alphas();
    let costs = if args.costs { Some(cost_vector(&u)?) } else { None };
    let mut alloc = match &costs {
        Some(l) => regression_with_costs(alphas, &spec, l, &u.config.solver)?,
        None => regression_limit_weights(alphas, &spec)?,
    };
    if alloc.effective_costs.is_empty() {
        alloc.effective_costs = costs.clone().unwrap_or_else(|| vec![0.0; u.set.len()]);
    }
    let zetas = &u.config.regression.zetas;
    let limit_check = match (&costs, args.check_limit) {
        (_, false) => None,
        (None, true) => Some(limit_consistency_check(alphas, &u.full, zetas)?),
        (Some(l), true) => Some(limit_consistency_check_with_costs(
            alphas,
            &u.full,
            l,
            zetas,
            &u.config.solver,
        )?),
    };
    let report = RegressReport {
        command: "regress",
        factor_model: u.model.clone(),
        with_costs: args.costs,
        streams: stream_rows(&u.set, &alloc),
        inactive: labels_of(&u.set, &alloc.inactive),
        factor_exposure: factor_exposure(&alloc.weights, &spec),
        limit_check,
    };
    let mut text = format!(
        "regress: {} streams on {} factors{}\n",
        u.set.len(),
        u.model.factors,
        if args.costs { ", with costs" } else { "" }
    );
    text += &stream_table(&report.streams);
    text += &format!("inactive: [{}]\n", report.inactive.join(", "));
    text += &format!("max factor exposure: {}\n", sig(report.factor_exposure));
    if let Some(r) = &report.limit_check {
        let mut t = Table::new(&["zeta", "weight gap"]);
        for (z, g) in r.zetas.iter().zip(&r.gaps) {
            t.row(vec![sig(*z), sig(*g)]);
        }
        text += "\n";
        text += &t.render();
        text += &format!("strictly decreasing: {}\n", r.strictly_decreasing);
    }
    text += &notes_text(&alloc.diagnostics.notes);
    Ok(Output::ok(text, to_json(&report)))
}

#[derive(Debug, Serialize)]
struct Comparison {
    solver_objective: f64,
    objective_gap: f64,
    patterns_agree: bool,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    command: &'static str,
    factor_model: ModelInfo,
    lambda: f64,
    costs: Vec<f64>,
    objective: f64,
    raw_weights: Vec<f64>,
    weights: Vec<f64>,
    pattern: Vec<i8>,
    patterns_examined: usize,
    feasible_patterns: usize,
    tied_patterns: usize,
    sign_inconsistent_patterns: usize,
    descent: DescentReport,
    comparison: Option<Comparison>,
}

/// Objective agreement required for `--compare` to pass.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

pub fn oracle(args: &OracleArgs) -> CliResult<Output> {
    let u = load_universe(&args.universe, optimizer_factors)?;
    let n = u.set.len();
    if n > alphacross_core::oracle::MAX_ORACLE_STREAMS {
        return Err(Error::TooManyStreams(n).into());
    }
    let lambda = u.config.solver.lambda;
    let costs = cost_vector(&u)?;
    let cov = u.full.implied_covariance();
    let alphas = u.set.alphas();
    let o = brute_force_solve(alphas, &cov, &costs, lambda)?;
    let descent = numeric_descent_check(alphas, &cov, &costs, lambda, &o.weights, u.config.verify.seed);
    let (weights, _) = normalize_weights(&o.weights)?;
    let comparison = if args.compare {
        let options = SolveOptions {
            outer_loop: false,
            ..u.config.solver.clone()
        };
        let a = solve_linear_cost(alphas, &u.full, &costs, &options)?;
        let gap = (a.diagnostics.objective - o.objective).abs();
        let patterns_agree = a.signs == o.pattern.0;
        Some(Comparison {
            solver_objective: a.diagnostics.objective,
            objective_gap: gap,
            patterns_agree,
            passed: patterns_agree && gap < ORACLE_TOLERANCE,
        })
    } else {
        None
    };
    let report = OracleReport {
        command: "oracle",
        factor_model: u.model.clone(),
        lambda,
        costs,
        objective: o.objective,
        raw_weights: o.weights.clone(),
        weights,
        pattern: o.pattern.0.clone(),
        patterns_examined: o.patterns_examined,
        feasible_patterns: o.feasible.len(),
        tied_patterns: o.tied.len(),
        sign_inconsistent_patterns: o.sign_inconsistent.len(),
        descent,
        comparison,
    };
    let mut t = Table::new(&["stream", "alpha", "cost", "raw weight", "weight", "sign"]);
    for i in 0..n {
        t.row(vec![
            u.set.labels()[i].clone(),
            sig(alphas[i]),
            sig(report.costs[i]),
            sig(report.raw_weights[i]),
            sig(report.weights[i]),
            report.pattern[i].to_string(),
        ]);
    }
    let mut text = format!("oracle: {n} streams, {} patterns examined\n", report.patterns_examined);
    text += &t.render();
    text += "\n";
    text += &pairs(&[
        ("objective", sig(report.objective)),
        ("feasible patterns", report.feasible_patterns.to_string()),
        ("tied patterns", report.tied_patterns.to_string()),
        ("sign-inconsistent patterns", report.sign_inconsistent_patterns.to_string()),
        ("worst descent violation", sig(report.descent.worst_violation)),
        ("descent draws", report.descent.draws.to_string()),
        ("descent seed", report.descent.seed.to_string()),
    ]);
    let mut failure = None;
    if let Some(c) = &report.comparison {
        text += &format!(
            "equivalence: {} (objective gap {}, patterns agree: {})\n",
            if c.passed { "PASS" } else { "FAIL" },
            sig(c.objective_gap),
            c.patterns_agree
        );
        if !c.passed {
            failure = Some(CliError::Mismatch(format!(
                "objective gap {}, patterns agree: {}",
                sig(c.objective_gap),
                c.patterns_agree
            )));
        }
    }
    Ok(Output {
        text,
        json: to_json(&report),
        failure,
    })
}

pub fn generate_cmd(args: &GenerateArgs) -> CliResult<Output> {
    let params = GeneratorParams {
        seed: args.seed,
        n: args.n,
        m: args.m,
        structure: args.structure,
        rho: args.rho,
        factors: args.factors,
        vol: args.vol,
        alpha_mean: args.alpha_mean,
        alpha_spread: args.alpha_spread,
        tau_min: args.tau_min,
        tau_max: args.tau_max,
    };
    let g = generate(&params)?;
    let files = write_outputs(&g, &args.out_dir)?;
    let text = files.iter().map(|f| format!("wrote {}\n", f.display())).collect();
    let json = serde_json::json!({
        "command": "generate",
        "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
    });
    Ok(Output::ok(text, json))
}
