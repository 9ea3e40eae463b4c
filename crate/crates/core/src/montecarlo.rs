//! Out-of-sample validation of fixed dispatch decisions.
//!
//! Wind is sampled per farm, the dead-zone response is replayed exactly for
//! every realization, and physical limit violations and realized costs are
//! tallied. Scenario replay runs in parallel but every reduction walks the
//! scenarios in index order, so reports are bit-identical for any worker
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::policy::{Deadband, DroopSet, Regime, ResponseModel};
use crate::ptdf::PtdfMatrix;
use crate::solver::{DispatchSolution, Status};
use crate::uncertainty::{scheduled_flows, WindStatistics};

/// Violations smaller than this many MW are not counted.
pub const VIOLATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    /// One row per scenario, one column per wind farm, MW.
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
    pub n: usize,
}

pub fn sample_wind(wind: &WindStatistics, n: usize, seed: u64) -> Result<ScenarioSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let laws = wind
        .means
        .iter()
        .zip(&wind.variances)
        .map(|(m, v)| Normal::new(*m, v.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| laws.iter().map(|d| d.sample(&mut rng)).collect()).collect();
    Ok(ScenarioSet { samples, seed, n })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    /// Clip negative wind realizations to zero.
    pub truncate_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub case_hash: String,
    pub seed: u64,
    pub n: usize,
    pub gen_upper_rate: Vec<f64>,
    pub gen_lower_rate: Vec<f64>,
    pub line_upper_rate: Vec<f64>,
    pub line_lower_rate: Vec<f64>,
    /// Fraction of scenarios with at least one generator violation.
    pub generator_rate: f64,
    /// Fraction of scenarios with at least one line violation.
    pub line_rate: f64,
    /// Fraction of scenarios with at least one violation of any kind.
    pub system_wide_rate: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
    /// Fraction of scenarios outside the dead zone.
    pub primary_fraction: f64,
    /// Largest |generation + wind - load| over the scenarios, MW.
    pub max_imbalance: f64,
}

impl ValidationReport {
    pub fn max_individual_rate(&self) -> f64 {
        self.gen_upper_rate
            .iter()
            .chain(&self.gen_lower_rate)
            .chain(&self.line_upper_rate)
            .chain(&self.line_lower_rate)
            .fold(0.0, |m, r| m.max(*r))
    }
}

struct Outcome {
    gen_upper: Vec<bool>,
    gen_lower: Vec<bool>,
    line_upper: Vec<bool>,
    line_lower: Vec<bool>,
    cost: f64,
    primary: bool,
    imbalance: f64,
}

pub fn validate(
    solution: &DispatchSolution,
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    deadband: &Deadband,
    scenarios: &ScenarioSet,
    options: ValidateOptions,
) -> Result<ValidationReport> {
    if solution.status != Status::Optimal {
        return Err(Error::InvalidArgument("only optimal solutions can be validated".into()));
    }
    let p0 = &solution.p0;
    if p0.len() != case.generators.len() {
        return Err(Error::InvalidArgument("solution does not match the case".into()));
    }
    let model = ResponseModel::new(droops, *deadband)?;
    let forecast = case.forecasts();
    let scheduled = scheduled_flows(case, ptdf, p0);
    let wbus = case.wind_buses();
    let gbus = case.generator_buses();
    let wind_rows: Vec<Vec<f64>> = (0..ptdf.lines()).map(|l| wbus.iter().map(|&b| ptdf.get(l, b)).collect()).collect();
    let gen_rows: Vec<Vec<f64>> = (0..ptdf.lines()).map(|l| gbus.iter().map(|&b| ptdf.get(l, b)).collect()).collect();
    let load = case.total_load();

    let outcomes: Vec<Outcome> = scenarios
        .samples
        .par_iter()
        .map(|sample| {
            let wind: Vec<f64> = sample
                .iter()
                .map(|&r| if options.truncate_negative { r.max(0.0) } else { r })
                .collect();
            let dev: Vec<f64> = wind.iter().zip(&forecast).map(|(r, f)| r - f).collect();
            let response = model.respond_total(p0, dev.iter().sum());
            let p = &response.p;
            let delta: Vec<f64> = p.iter().zip(p0).map(|(p, p0)| p - p0).collect();
            let mut line_upper = Vec::with_capacity(case.lines.len());
            let mut line_lower = Vec::with_capacity(case.lines.len());
            for (l, line) in case.lines.iter().enumerate() {
                let f = scheduled[l]
                    + wind_rows[l].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>()
                    + gen_rows[l].iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>();
                line_upper.push(f > line.limit + VIOLATION_TOLERANCE);
                line_lower.push(f < -line.limit - VIOLATION_TOLERANCE);
            }
            let gens = &case.generators;
            Outcome {
                gen_upper: gens.iter().zip(p).map(|(g, p)| *p > g.p_max + VIOLATION_TOLERANCE).collect(),
                gen_lower: gens.iter().zip(p).map(|(g, p)| *p < g.p_min - VIOLATION_TOLERANCE).collect(),
                line_upper,
                line_lower,
                cost: gens.iter().zip(p).map(|(g, p)| g.cost(*p)).sum(),
                primary: response.regime == Regime::Primary,
                imbalance: (p.iter().sum::<f64>() + wind.iter().sum::<f64>() - load).abs(),
            }
        })
        .collect();

    let n = outcomes.len();
    let nf = n as f64;
    let rate = |pick: &dyn Fn(&Outcome) -> &Vec<bool>, k: usize| -> Vec<f64> {
        (0..k).map(|i| outcomes.iter().filter(|o| pick(o)[i]).count() as f64 / nf).collect()
    };
    let any = |o: &Outcome, gens: bool, lines: bool| {
        (gens && (o.gen_upper.iter().any(|v| *v) || o.gen_lower.iter().any(|v| *v)))
            || (lines && (o.line_upper.iter().any(|v| *v) || o.line_lower.iter().any(|v| *v)))
    };
    let fraction = |f: &dyn Fn(&Outcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / nf;
    let cost_mean = outcomes.iter().map(|o| o.cost).sum::<f64>() / nf;
    let cost_std = if n > 1 {
        (outcomes.iter().map(|o| (o.cost - cost_mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    let g = case.generators.len();
    let l = case.lines.len();
    Ok(ValidationReport {
        case_hash: case.content_hash(),
        seed: scenarios.seed,
        n,
        gen_upper_rate: rate(&|o| &o.gen_upper, g),
        gen_lower_rate: rate(&|o| &o.gen_lower, g),
        line_upper_rate: rate(&|o| &o.line_upper, l),
        line_lower_rate: rate(&|o| &o.line_lower, l),
        generator_rate: fraction(&|o| any(o, true, false)),
        line_rate: fraction(&|o| any(o, false, true)),
        system_wide_rate: fraction(&|o| any(o, true, true)),
        cost_mean,
        cost_std,
        primary_fraction: fraction(&|o| o.primary),
        max_imbalance: outcomes.iter().fold(0.0, |m, o| m.max(o.imbalance)),
    })
}

/// One input row of [`compare`].
#[derive(Debug, Clone, Copy)]
pub struct ComparisonEntry<'a> {
    pub label: &'a str,
    pub solution: &'a DispatchSolution,
    pub report: &'a ValidationReport,
    pub solve_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub epsilon: Option<f64>,
    pub objective: f64,
    /// Objective relative to the first row with the same ε, percent.
    pub gap_pct: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub generator_rate: f64,
    pub line_rate: f64,
    pub sys_violation_rate: f64,
    pub solve_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(entries: &[ComparisonEntry<'_>]) -> Result<ComparisonTable> {
    let Some(first) = entries.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    if entries.len() < 2 {
        return Err(Error::InvalidArgument("need at least two reports to compare".into()));
    }
    for e in entries {
        if e.report.case_hash != first.report.case_hash {
            return Err(Error::CaseMismatch {
                expected: first.report.case_hash.clone(),
                found: e.report.case_hash.clone(),
            });
        }
        if e.report.seed != first.report.seed {
            return Err(Error::SeedMismatch { expected: first.report.seed, found: e.report.seed });
        }
        if e.report.n != first.report.n {
            return Err(Error::InvalidArgument(format!(
                "scenario counts differ: {} and {}",
                first.report.n, e.report.n
            )));
        }
    }
    let rows = entries
        .iter()
        .map(|e| {
            let base = entries
                .iter()
                .find(|b| b.solution.epsilon == e.solution.epsilon)
                .map(|b| b.solution.objective)
                .unwrap_or(e.solution.objective);
            ComparisonRow {
                label: e.label.to_string(),
                epsilon: e.solution.epsilon,
                objective: e.solution.objective,
                gap_pct: 100.0 * (e.solution.objective - base) / base,
                cost_mean: e.report.cost_mean,
                cost_std: e.report.cost_std,
                generator_rate: e.report.generator_rate,
                line_rate: e.report.line_rate,
                sys_violation_rate: e.report.system_wide_rate,
                solve_seconds: e.solve_seconds,
            }
        })
        .collect();
    Ok(ComparisonTable { rows })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    /// The comparison table. Without timing the `solve_seconds` column is
    /// left empty so repeated runs produce identical bytes.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record([
            "label",
            "epsilon",
            "objective",
            "gap_pct",
            "cost_mean",
            "cost_std",
            "sys_violation_rate",
            "solve_seconds",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            let timing = if include_timing { opt(r.solve_seconds) } else { String::new() };
            w.write_record([
                r.label.clone(),
                opt(r.epsilon),
                r.objective.to_string(),
                r.gap_pct.to_string(),
                r.cost_mean.to_string(),
                r.cost_std.to_string(),
                r.sys_violation_rate.to_string(),
                timing,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Cost statistics and violation rates against ε, one row per entry.
    pub fn plot_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record([
            "label",
            "epsilon",
            "cost_mean",
            "cost_std",
            "generator_rate",
            "line_rate",
            "sys_violation_rate",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                opt(r.epsilon),
                r.cost_mean.to_string(),
                r.cost_std.to_string(),
                r.generator_rate.to_string(),
                r.line_rate.to_string(),
                r.sys_violation_rate.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}
