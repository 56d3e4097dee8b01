//! Nonlinear impact through an effective linear cost, and the portfolio
//! capacity it implies.
//!
//! With impact the P&L is `P = I sum_i (alpha_i w_i - L_i |w_i|) - (Q~/n) (sum_i tau_i |w_i|)^n`,
//! `Q~ = Q (I rho*)^n`. Expanding the last bracket to first order around the
//! mean turnover turns the impact into a per-stream linear surcharge,
//! `L~_i = L_i + Q~' tau_bar^(n-1) tau_i` with `Q~' = Q~ / I`, which the
//! linear-cost solver handles unchanged. Because `L~_i` grows with `I`, the
//! optimized P&L is bounded in `I`.

use serde::{Deserialize, Serialize};

use crate::covariance::FactorModelSource;
use crate::error::{Error, Result};
use crate::model::{evaluate_pnl, AlphaSet, Allocation, CostSpec, PnlReport};
use crate::optimizer::{solve_with_rho_star_loop, SolveOptions};

/// Above this ratio of turnover spread to mean turnover the first-order
/// expansion is flagged as unreliable.
pub const DISPERSION_WARNING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSpec {
    /// `Q rho*^n I^(n-1)`.
    pub q_tilde_prime: f64,
    pub tau_bar: f64,
    pub tau_tilde: Vec<f64>,
    /// `L rho* tau_i`.
    pub linear_costs: Vec<f64>,
    /// `L~_i`.
    pub effective_costs: Vec<f64>,
    /// Population stdev of `tau` over its mean; `None` when the mean is 0.
    pub dispersion: Option<f64>,
    /// All turnovers are equal. The impact cost is then the same for every
    /// normalized allocation, so the solver uses `linear_costs` and the
    /// surcharge in `effective_costs` is not applied.
    pub uniform_turnover: bool,
}

impl ImpactSpec {
    pub fn dispersion_warning(&self) -> bool {
        self.dispersion.is_some_and(|d| d > DISPERSION_WARNING)
    }
}

fn q_tilde_prime(cost_spec: &CostSpec, rho_star: f64) -> f64 {
    if cost_spec.impact_coeff == 0.0 {
        return 0.0;
    }
    let n = cost_spec.impact_exponent;
    cost_spec.impact_coeff * rho_star.powf(n) * cost_spec.investment.powf(n - 1.0)
}

/// `L~` for one stream with turnover `tau`, given the mean turnover.
pub(crate) fn effective_cost(cost_spec: &CostSpec, rho_star: f64, tau_bar: f64, tau: f64) -> f64 {
    let linear = cost_spec.linear_coeff * rho_star * tau;
    let qp = q_tilde_prime(cost_spec, rho_star);
    if qp == 0.0 {
        return linear;
    }
    linear + qp * tau_bar.powf(cost_spec.impact_exponent - 1.0) * tau
}

fn is_uniform(turnovers: &[f64], tau_bar: f64) -> bool {
    turnovers.iter().all(|t| (t - tau_bar).abs() <= 1e-12 * tau_bar.max(f64::MIN_POSITIVE))
}

/// Per-stream costs the solver uses over `universe` (entries outside it are
/// still filled in, for reporting): `L~_i` with the mean turnover of
/// `universe`, or plain `L_i` when those turnovers are all equal.
pub(crate) fn solver_costs(cost_spec: &CostSpec, turnovers: &[f64], universe: &[usize], rho_star: f64) -> Vec<f64> {
    let sub: Vec<f64> = universe.iter().map(|&i| turnovers[i]).collect();
    let tau_bar = sub.iter().sum::<f64>() / sub.len() as f64;
    let linear = cost_spec.impact_coeff == 0.0 || is_uniform(&sub, tau_bar);
    turnovers
        .iter()
        .map(|&t| {
            if linear {
                cost_spec.linear_coeff * rho_star * t
            } else {
                effective_cost(cost_spec, rho_star, tau_bar, t)
            }
        })
        .collect()
}

pub fn effective_linear_costs(cost_spec: &CostSpec, turnovers: &[f64], rho_star: f64) -> Result<ImpactSpec> {
    cost_spec.validate()?;
    if turnovers.is_empty() {
        return Err(Error::DimensionMismatch("no turnovers".into()));
    }
    if !(rho_star > 0.0 && rho_star <= 1.0) {
        return Err(Error::InvalidOption(format!("rho_star {rho_star} outside (0, 1]")));
    }
    let n = turnovers.len() as f64;
    let tau_bar = turnovers.iter().sum::<f64>() / n;
    let tau_tilde: Vec<f64> = turnovers.iter().map(|t| t - tau_bar).collect();
    let dispersion = if tau_bar > 0.0 {
        let var = tau_tilde.iter().map(|d| d * d).sum::<f64>() / n;
        Some(var.sqrt() / tau_bar)
    } else {
        None
    };
    Ok(ImpactSpec {
        q_tilde_prime: q_tilde_prime(cost_spec, rho_star),
        tau_bar,
        tau_tilde,
        linear_costs: turnovers
            .iter()
            .map(|t| cost_spec.linear_coeff * rho_star * t)
            .collect(),
        effective_costs: turnovers
            .iter()
            .map(|&t| effective_cost(cost_spec, rho_star, tau_bar, t))
            .collect(),
        dispersion,
        uniform_turnover: is_uniform(turnovers, tau_bar),
    })
}

/// `(Q~/n) [tau_bar^n + n tau_bar^(n-1) sum_i tau~_i |w_i|]` over `universe`.
fn approximate_impact_cost(cost_spec: &CostSpec, rho_star: f64, spec: &ImpactSpec, universe: &[usize], weights: &[f64]) -> f64 {
    if cost_spec.impact_coeff == 0.0 {
        return 0.0;
    }
    let n = cost_spec.impact_exponent;
    let q_tilde = cost_spec.impact_coeff * (cost_spec.investment * rho_star).powf(n);
    let spread: f64 = universe
        .iter()
        .enumerate()
        .map(|(k, &i)| spec.tau_tilde[k] * weights[i].abs())
        .sum();
    q_tilde / n * (spec.tau_bar.powf(n) + n * spec.tau_bar.powf(n - 1.0) * spread)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSolution {
    pub allocation: Allocation,
    /// Exact P&L, with the approximated impact cost alongside.
    pub pnl: PnlReport,
    /// Effective costs over the final universe the turnover reduction was
    /// computed on.
    pub spec: ImpactSpec,
}

/// Solves with costs `L~_i` and reports the exact P&L. Risk is measured on
/// the factor-model covariance of the full universe.
///
/// With equal turnovers the impact term is a constant shift of the P&L for
/// normalized weights and the problem is solved with the linear costs alone.
pub fn solve_with_impact(
    alpha_set: &AlphaSet,
    source: &dyn FactorModelSource,
    cost_spec: &CostSpec,
    options: &SolveOptions,
) -> Result<ImpactSolution> {
    let mut allocation = solve_with_rho_star_loop(alpha_set, source, cost_spec, options)?;
    let rho = allocation.rho_star.unwrap_or(1.0);
    // The last round's universe is the final active set when the outer loop
    // converges, and the full set when it is disabled.
    let universe: Vec<usize> = if options.outer_loop {
        allocation.active.clone()
    } else {
        (0..alpha_set.len()).collect()
    };
    let taus: Vec<f64> = universe.iter().map(|&i| alpha_set.turnovers()[i]).collect();
    let spec = effective_linear_costs(cost_spec, &taus, rho)?;
    if spec.dispersion_warning() {
        allocation.diagnostics.notes.push(format!(
            "turnover dispersion {:.3} exceeds {DISPERSION_WARNING}; impact expansion is rough",
            spec.dispersion.unwrap_or(0.0)
        ));
    }
    let all: Vec<usize> = (0..alpha_set.len()).collect();
    let risk = source.build(&all)?.implied_covariance();
    let mut pnl = evaluate_pnl(alpha_set, &allocation.weights, cost_spec, rho, &risk)?;
    if cost_spec.impact_coeff > 0.0 {
        pnl.impact_cost_approx = Some(approximate_impact_cost(cost_spec, rho, &spec, &universe, &allocation.weights));
    }
    Ok(ImpactSolution { allocation, pnl, spec })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityOptions {
    pub min_investment: f64,
    pub max_investment: f64,
    pub samples_per_decade: usize,
    /// Golden-section stops when the bracket's relative width drops below this.
    pub relative_width: f64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            min_investment: 1.0,
            max_investment: 1e12,
            samples_per_decade: 10,
            relative_width: 1e-6,
        }
    }
}

impl CapacityOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_investment > 0.0
            && self.max_investment.is_finite()
            && self.max_investment > self.min_investment
            && self.samples_per_decade >= 1
            && self.relative_width > 0.0
            && self.relative_width < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidOption("invalid capacity search range".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub capacity: f64,
    pub pnl_at_capacity: f64,
    /// `(I, P_opt(I))` in increasing `I`, including the refinement points.
    pub curve: Vec<(f64, f64)>,
    pub bracket: (f64, f64),
}

/// Optimized exact P&L at investment `investment`; zero once costs kill
/// every stream.
pub fn optimized_pnl(
    alpha_set: &AlphaSet,
    source: &dyn FactorModelSource,
    cost_spec: &CostSpec,
    options: &SolveOptions,
    investment: f64,
) -> Result<f64> {
    let spec = cost_spec.with_investment(investment);
    match solve_with_impact(alpha_set, source, &spec, options) {
        Ok(sol) => Ok(sol.pnl.pnl),
        Err(Error::AllAlphasKilled) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Investment level maximizing the optimized P&L. The investment in
/// `cost_spec` is ignored.
pub fn find_capacity(
    alpha_set: &AlphaSet,
    source: &dyn FactorModelSource,
    cost_spec: &CostSpec,
    options: &SolveOptions,
    search: &CapacityOptions,
) -> Result<CapacityResult> {
    cost_spec.validate()?;
    search.validate()?;
    if cost_spec.impact_coeff == 0.0 {
        return Err(Error::UnboundedCapacity);
    }
    let p = |i: f64| optimized_pnl(alpha_set, source, cost_spec, options, i);

    let (lo, hi) = (search.min_investment.ln(), search.max_investment.ln());
    let decades = (hi - lo) / std::f64::consts::LN_10;
    let steps = ((decades * search.samples_per_decade as f64).ceil() as usize).max(2);
    let mut curve = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let i = (lo + (hi - lo) * k as f64 / steps as f64).exp();
        curve.push((i, p(i)?));
    }
    // First maximum, so ties resolve toward smaller investment.
    let mut best = 0;
    for k in 1..curve.len() {
        if curve[k].1 > curve[best].1 {
            best = k;
        }
    }
    if !(curve[best].1 > 0.0) {
        return Err(Error::NoPositiveCapacity);
    }
    let a = curve[best.saturating_sub(1)].0;
    let b = curve[(best + 1).min(curve.len() - 1)].0;
    let mut evaluated = Vec::new();
    let (x, px) = golden_section_max(a.ln(), b.ln(), search.relative_width, curve[best], |t| {
        let i = t.exp();
        let v = p(i)?;
        evaluated.push((i, v));
        Ok(v)
    })?;
    curve.extend(evaluated);
    curve.sort_by(|u, v| u.0.total_cmp(&v.0));
    curve.dedup_by(|u, v| u.0 == v.0);
    Ok(CapacityResult {
        capacity: x,
        pnl_at_capacity: px,
        curve,
        bracket: (a, b),
    })
}

/// Golden-section search for a maximum of `f` on `[a, b]` in log coordinates.
/// Returns the best point evaluated (in linear units), never worse than
/// `seed`.
fn golden_section_max(
    mut a: f64,
    mut b: f64,
    relative_width: f64,
    seed: (f64, f64),
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = seed;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    // Width in log coordinates equals relative width in linear units.
    while b - a > relative_width {
        for (t, ft) in [(c, fc), (d, fd)] {
            if ft > best.1 || (ft == best.1 && t.exp() < best.0) {
                best = (t.exp(), ft);
            }
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    for (t, ft) in [(c, fc), (d, fd)] {
        if ft > best.1 || (ft == best.1 && t.exp() < best.0) {
            best = (t.exp(), ft);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::FactorModel;
    use crate::model::{validate_alpha_set, AlphaSetCandidate};

    fn single() -> AlphaSet {
        validate_alpha_set(AlphaSetCandidate {
            labels: vec!["a".into()],
            history: vec![vec![Some(0.1)], vec![Some(0.3)], vec![Some(-0.2)]],
            turnovers: vec![1.0],
            alphas: None,
        })
        .unwrap()
    }

    fn single_costs() -> CostSpec {
        CostSpec {
            linear_coeff: 0.01,
            impact_coeff: 0.001,
            impact_exponent: 2.0,
            investment: 1.0,
            rho_star_override: None,
        }
    }

    #[test]
    fn no_impact_leaves_linear_costs() {
        let spec = effective_linear_costs(&CostSpec::linear(0.01), &[0.2, 0.4], 0.5).unwrap();
        assert_eq!(spec.effective_costs, spec.linear_costs);
        assert!((spec.linear_costs[1] - 0.002).abs() < 1e-18);
        assert_eq!(spec.q_tilde_prime, 0.0);
    }

    #[test]
    fn identical_turnovers_give_uniform_surcharge() {
        let cs = CostSpec {
            investment: 50.0,
            ..single_costs()
        };
        let spec = effective_linear_costs(&cs, &[0.3; 4], 0.8).unwrap();
        let expected = 0.01 * 0.8 * 0.3 + 0.001 * 0.8f64.powi(2) * 50.0 * 0.3 * 0.3;
        for l in &spec.effective_costs {
            assert!((l - expected).abs() < 1e-15);
        }
        assert_eq!(spec.dispersion, Some(0.0));
    }

    #[test]
    fn two_stream_surcharge_arithmetic() {
        let cs = CostSpec {
            linear_coeff: 0.0,
            impact_coeff: 0.001,
            impact_exponent: 2.0,
            investment: 100.0,
            rho_star_override: None,
        };
        let spec = effective_linear_costs(&cs, &[0.5, 1.5], 1.0).unwrap();
        assert!((spec.tau_bar - 1.0).abs() < 1e-15);
        assert!((spec.effective_costs[0] - 0.05).abs() < 1e-15);
        assert!((spec.effective_costs[1] - 0.15).abs() < 1e-15);
        assert!(spec.tau_tilde.iter().sum::<f64>().abs() < 1e-12);
        assert!((spec.dispersion.unwrap() - 0.5).abs() < 1e-15);
        assert!(!spec.dispersion_warning());
    }

    #[test]
    fn surcharge_increases_with_investment() {
        let taus = [0.1, 0.5, 0.9];
        let mut prev = effective_linear_costs(&single_costs(), &taus, 0.7).unwrap();
        for inv in [10.0, 100.0, 1000.0] {
            let cur = effective_linear_costs(&single_costs().with_investment(inv), &taus, 0.7).unwrap();
            for k in 0..3 {
                assert!(cur.effective_costs[k] > prev.effective_costs[k]);
            }
            prev = cur;
        }
    }

    #[test]
    fn single_stream_capacity() {
        let set = single();
        let fm = FactorModel::diagonal(vec![0.04]).unwrap();
        let res = find_capacity(&set, &fm, &single_costs(), &SolveOptions::default(), &CapacityOptions::default()).unwrap();
        assert!((res.capacity - 90.0).abs() < 90.0 * 1e-4, "{}", res.capacity);
        assert!((res.pnl_at_capacity - 4.05).abs() < 4.05 * 1e-4);
        assert!(res.curve.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(res.bracket.0 < 90.0 && res.bracket.1 > 90.0);
    }

    #[test]
    fn doubling_impact_halves_capacity() {
        let set = single();
        let fm = FactorModel::diagonal(vec![0.04]).unwrap();
        let cs = CostSpec {
            impact_coeff: 0.002,
            ..single_costs()
        };
        let res = find_capacity(&set, &fm, &cs, &SolveOptions::default(), &CapacityOptions::default()).unwrap();
        assert!((res.capacity - 45.0).abs() < 45.0 * 1e-4);
    }

    #[test]
    fn capacity_errors() {
        let set = single();
        let fm = FactorModel::diagonal(vec![0.04]).unwrap();
        let opts = SolveOptions::default();
        let search = CapacityOptions::default();
        let linear = CostSpec::linear(0.01);
        assert_eq!(find_capacity(&set, &fm, &linear, &opts, &search).unwrap_err(), Error::UnboundedCapacity);
        let dominated = CostSpec {
            linear_coeff: 0.1,
            ..single_costs()
        };
        assert_eq!(find_capacity(&set, &fm, &dominated, &opts, &search).unwrap_err(), Error::NoPositiveCapacity);
    }

    #[test]
    fn exact_and_approximate_impact_agree_for_one_stream() {
        let set = single();
        let fm = FactorModel::diagonal(vec![0.04]).unwrap();
        let cs = single_costs().with_investment(60.0);
        let sol = solve_with_impact(&set, &fm, &cs, &SolveOptions::default()).unwrap();
        assert!((sol.pnl.pnl - (0.09 * 60.0 - 0.0005 * 3600.0)).abs() < 1e-12);
        assert!((sol.pnl.impact_cost_approx.unwrap() - sol.pnl.impact_cost_total).abs() < 1e-12);
        // a single stream is never killed by impact, only by linear cost
        let far = solve_with_impact(&set, &fm, &cs.with_investment(500.0), &SolveOptions::default()).unwrap();
        assert!(far.pnl.pnl < 0.0);
    }

    #[test]
    fn impact_kills_everything_at_large_investment() {
        let set = validate_alpha_set(AlphaSetCandidate {
            labels: vec!["a".into(), "b".into()],
            history: vec![
                vec![Some(0.1), Some(0.05)],
                vec![Some(0.3), Some(-0.1)],
                vec![Some(-0.2), Some(0.2)],
                vec![Some(0.0), Some(0.1)],
            ],
            turnovers: vec![0.5, 1.5],
            alphas: None,
        })
        .unwrap();
        let fm = FactorModel::diagonal(vec![0.04, 0.02]).unwrap();
        let opts = SolveOptions {
            outer_loop: false,
            ..Default::default()
        };
        let cs = CostSpec {
            rho_star_override: Some(1.0),
            ..single_costs()
        };
        assert!(solve_with_impact(&set, &fm, &cs.with_investment(10.0), &opts).is_ok());
        // L~ = 0.01 tau + 0.001 I tau >= 0.1 for both streams once I >= 190
        assert_eq!(
            solve_with_impact(&set, &fm, &cs.with_investment(190.0), &opts).unwrap_err(),
            Error::AllAlphasKilled
        );
    }

    #[test]
    fn golden_section_finds_interior_maximum() {
        let (x, fx) = golden_section_max(0.0, 5.0, 1e-9, (1.0, f64::NEG_INFINITY), |t| Ok(-(t - 2.0).powi(2))).unwrap();
        assert!((x.ln() - 2.0).abs() < 1e-8);
        assert!(fx.abs() < 1e-15);
    }
}
