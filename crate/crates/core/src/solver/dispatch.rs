//! Dispatch formulations: deterministic, chance-constrained, and
//! chance-constrained with dead-zone primary response.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cceval::{
    analytic_cc_tightening, capacity, wcc_evaluate, weight_scale, ConstraintSpec, RegimeEvent, Side, Subject,
    WeightScaleRule,
};
use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::policy::{tilde_alpha, Deadband, DroopSet, Regime};
use crate::ptdf::PtdfMatrix;
use crate::solver::qp::{solve_qp, solve_qp_warm, QpProblem, QpSolution, QpStatus};
use crate::uncertainty::{aggregate_wind, line_fluctuation_map, sigma_moments, truncated_moments, SigmaMoments, WindStatistics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    Dcopf,
    Ccopf,
    CcopfPfr,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Dcopf => "dcopf",
            Formulation::Ccopf => "ccopf",
            Formulation::CcopfPfr => "ccopf-pfr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// A linearization retained by the cutting-plane loop:
/// `offset + coefficients·p0 ≤ ln value(p0)`, imposed as `≤ ln ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub constraint: String,
    pub coefficients: Vec<f64>,
    pub offset: f64,
    pub iteration: usize,
}

impl Cut {
    pub fn eval(&self, p0: &[f64]) -> f64 {
        self.offset + self.coefficients.iter().zip(p0).map(|(a, x)| a * x).sum::<f64>()
    }
}

/// Final value of one weighted constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValue {
    pub label: String,
    pub spec: ConstraintSpec,
    pub weight_scale: f64,
    /// Saturates at `f64::MAX` when the expectation overflows.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub formulation: Formulation,
    pub status: Status,
    pub p0: Vec<f64>,
    /// Expected operating cost, $.
    pub objective: f64,
    pub iterations: usize,
    pub epsilon: Option<f64>,
    pub deadband: Option<Deadband>,
    pub cuts: Vec<Cut>,
    pub constraints: Vec<ConstraintValue>,
    /// Largest `ln(value / ε)` over the weighted constraints at each
    /// iteration, floored at zero.
    pub violation_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfrOptions {
    pub weight_rule: WeightScaleRule,
    pub max_iterations: usize,
    /// A constraint is cut when its value exceeds `ε + tolerance`.
    pub tolerance: f64,
}

impl Default for PfrOptions {
    fn default() -> Self {
        PfrOptions { weight_rule: WeightScaleRule::Tightest, max_iterations: 200, tolerance: 1e-8 }
    }
}

/// Per-generator first and second moments of the imbalance each generator
/// absorbs: `E[p] = p0 - m1`, `E[p²] = p0² - 2·p0·m1 + m2`.
struct AbsorbedMoments {
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl AbsorbedMoments {
    fn none(n: usize) -> Self {
        AbsorbedMoments { m1: vec![0.0; n], m2: vec![0.0; n] }
    }
}

/// Linear data shared by every formulation.
struct Network<'a> {
    case: &'a GridCase,
    /// Flow on each line per MW at each generator.
    gen_ptdf: Vec<Vec<f64>>,
    /// Scheduled flows with every generator at zero.
    base_flows: Vec<f64>,
}

impl<'a> Network<'a> {
    fn new(case: &'a GridCase, ptdf: &PtdfMatrix) -> Self {
        let gbus = case.generator_buses();
        let gen_ptdf = (0..ptdf.lines()).map(|l| gbus.iter().map(|&b| ptdf.get(l, b)).collect()).collect();
        let inj = case.injections(&vec![0.0; case.generators.len()], &case.forecasts());
        let base_flows = (0..ptdf.lines()).map(|l| ptdf.flow_on(l, &inj)).collect();
        Network { case, gen_ptdf, base_flows }
    }

    /// Expected-cost objective, balance row and generator bounds `[lo, hi]`
    /// on the set points.
    fn master(&self, absorbed: &AbsorbedMoments, lo: &[f64], hi: &[f64]) -> (QpProblem, f64) {
        let gens = &self.case.generators;
        let n = gens.len();
        let q = gens.iter().map(|g| 2.0 * g.cost_quad).collect();
        let c = gens
            .iter()
            .zip(&absorbed.m1)
            .map(|(g, m1)| g.cost_lin - 2.0 * g.cost_quad * m1)
            .collect();
        let constant = gens
            .iter()
            .zip(absorbed.m1.iter().zip(&absorbed.m2))
            .map(|(g, (m1, m2))| g.cost_quad * m2 - g.cost_lin * m1 + g.cost_const)
            .sum();
        let mut p = QpProblem::new(q, c);
        let demand = self.case.total_load() - self.case.total_forecast();
        p.push_equality(&vec![1.0; n], demand);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            p.push_inequality(&row, hi[i]);
            row[i] = -1.0;
            p.push_inequality(&row, -lo[i]);
        }
        (p, constant)
    }

    /// Hold `offset[l] + flow(p0)` within `[-bound[l], bound[l]]` for every line.
    fn push_line_limits(&self, p: &mut QpProblem, offset: &[f64], bound: &[f64]) {
        for (l, row) in self.gen_ptdf.iter().enumerate() {
            let shift = self.base_flows[l] + offset[l];
            p.push_inequality(row, bound[l] - shift);
            let neg: Vec<f64> = row.iter().map(|v| -v).collect();
            p.push_inequality(&neg, bound[l] + shift);
        }
    }

    /// Gradient of a subject's mean with respect to the set points.
    fn mean_gradient(&self, subject: Subject) -> Vec<f64> {
        match subject {
            Subject::Generator(i) => {
                let mut g = vec![0.0; self.case.generators.len()];
                g[i] = 1.0;
                g
            }
            Subject::Line(l) => self.gen_ptdf[l].clone(),
        }
    }
}

fn solution(
    formulation: Formulation,
    qp: &QpSolution,
    constant: f64,
    epsilon: Option<f64>,
    deadband: Option<Deadband>,
) -> DispatchSolution {
    let status = match qp.status {
        QpStatus::Optimal => Status::Optimal,
        QpStatus::Infeasible => Status::Infeasible,
        QpStatus::IterationLimit => Status::IterationLimit,
    };
    DispatchSolution {
        formulation,
        status,
        p0: qp.x.clone(),
        objective: qp.objective + constant,
        iterations: qp.iterations,
        epsilon,
        deadband,
        cuts: vec![],
        constraints: vec![],
        violation_history: vec![],
    }
}

/// Deterministic economic dispatch with wind at its forecast.
pub fn solve_dcopf(case: &GridCase, ptdf: &PtdfMatrix) -> Result<DispatchSolution> {
    let net = Network::new(case, ptdf);
    let n = case.generators.len();
    let lo: Vec<f64> = case.generators.iter().map(|g| g.p_min).collect();
    let hi: Vec<f64> = case.generators.iter().map(|g| g.p_max).collect();
    let (mut p, constant) = net.master(&AbsorbedMoments::none(n), &lo, &hi);
    let limits: Vec<f64> = case.lines.iter().map(|l| l.limit).collect();
    net.push_line_limits(&mut p, &vec![0.0; limits.len()], &limits);
    let qp = solve_qp(&p)?;
    Ok(solution(Formulation::Dcopf, &qp, constant, None, None))
}

/// Chance-constrained dispatch under the affine policy (primary response
/// always active), with the Gaussian tails reformulated as tightened limits.
pub fn solve_ccopf(
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    wind: &WindStatistics,
    epsilon: f64,
) -> Result<DispatchSolution> {
    let tight = analytic_cc_tightening(case, ptdf, droops, wind, epsilon)?;
    let alpha = tilde_alpha(droops, Regime::Primary)?;
    let deviation = wind.mean_deviation(case);
    let mu: f64 = deviation.iter().sum();
    let (_, var) = aggregate_wind(wind);
    let absorbed = AbsorbedMoments {
        m1: alpha.iter().map(|a| a * mu).collect(),
        m2: alpha.iter().map(|a| a * a * (var + mu * mu)).collect(),
    };
    // Bounds on the mean output P = p0 - α̃·μ move to the set points.
    let lo: Vec<f64> = tight.gen_lower.iter().zip(&absorbed.m1).map(|(l, m)| l + m).collect();
    let hi: Vec<f64> = tight.gen_upper.iter().zip(&absorbed.m1).map(|(u, m)| u + m).collect();
    let net = Network::new(case, ptdf);
    let (mut p, constant) = net.master(&absorbed, &lo, &hi);
    let m = line_fluctuation_map(case, ptdf, &alpha);
    let offset: Vec<f64> = (0..ptdf.lines())
        .map(|l| m.row(l).iter().zip(&deviation).map(|(a, b)| a * b).sum())
        .collect();
    net.push_line_limits(&mut p, &offset, &tight.line_bound);
    let qp = solve_qp(&p)?;
    Ok(solution(Formulation::Ccopf, &qp, constant, Some(epsilon), None))
}

/// Every weighted constraint of the dead-zone formulation, in a fixed order:
/// regime, then generators before lines, then index, then upper before lower.
pub fn pfr_constraints(case: &GridCase, epsilon: f64) -> Result<Vec<ConstraintSpec>> {
    let mut out = Vec::new();
    for regime in Regime::BOTH {
        let subjects = (0..case.generators.len())
            .map(Subject::Generator)
            .chain((0..case.lines.len()).map(Subject::Line));
        for subject in subjects {
            for side in [Side::Upper, Side::Lower] {
                out.push(ConstraintSpec::new(case, subject, side, regime, epsilon)?);
            }
        }
    }
    Ok(out)
}

/// Expected absorbed imbalance under the dead-zone policy, mixing regimes.
fn regime_mixture(droops: &DroopSet, wind: &WindStatistics, case: &GridCase, deadband: &Deadband, moments: &[SigmaMoments; 2]) -> Result<AbsorbedMoments> {
    let mu: f64 = wind.mean_deviation(case).iter().sum();
    let (_, var) = aggregate_wind(wind);
    let mut absorbed = AbsorbedMoments::none(droops.len());
    for (k, regime) in Regime::BOTH.into_iter().enumerate() {
        let alpha = tilde_alpha(droops, regime)?;
        let event = RegimeEvent::new(regime, deadband, &moments[k]);
        let (mut e1, mut e2) = (0.0, 0.0);
        for (lo, hi) in event.pieces() {
            let (_, a, b) = truncated_moments(lo, hi, mu, var);
            e1 += a;
            e2 += b;
        }
        for (i, a) in alpha.iter().enumerate() {
            absorbed.m1[i] += a * e1;
            absorbed.m2[i] += a * a * e2;
        }
    }
    Ok(absorbed)
}

/// Chance-constrained dispatch with the dead-zone policy, enforced through
/// weighted chance constraints in a cutting-plane loop.
pub fn solve_ccopf_pfr(
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    wind: &WindStatistics,
    epsilon: f64,
    deadband: Deadband,
    options: PfrOptions,
) -> Result<DispatchSolution> {
    if options.max_iterations == 0 {
        return Err(Error::InvalidArgument("iteration limit must be positive".into()));
    }
    let n = case.generators.len();
    let specs = pfr_constraints(case, epsilon)?;
    let moments_at = |p0: &[f64]| -> Result<[SigmaMoments; 2]> {
        Ok([
            sigma_moments(case, ptdf, droops, p0, wind, Regime::DeadZone)?,
            sigma_moments(case, ptdf, droops, p0, wind, Regime::Primary)?,
        ])
    };
    let zero = moments_at(&vec![0.0; n])?;
    // Weight scales do not depend on the set points.
    let scales: Vec<f64> = specs
        .par_iter()
        .map(|s| weight_scale(options.weight_rule, s, &zero[s.regime.sigma() as usize], &deadband, capacity(case, s.subject)))
        .collect::<Result<_>>()?;

    let net = Network::new(case, ptdf);
    let absorbed = regime_mixture(droops, wind, case, &deadband, &zero)?;
    let lo: Vec<f64> = case.generators.iter().map(|g| g.p_min).collect();
    let hi: Vec<f64> = case.generators.iter().map(|g| g.p_max).collect();
    let (mut master, constant) = net.master(&absorbed, &lo, &hi);
    let limits: Vec<f64> = case.lines.iter().map(|l| l.limit).collect();
    net.push_line_limits(&mut master, &vec![0.0; limits.len()], &limits);

    let mut cuts: Vec<Cut> = Vec::new();
    let mut history = Vec::new();
    let mut hint: Option<Vec<usize>> = None;
    for iteration in 1..=options.max_iterations {
        let qp = solve_qp_warm(&master, hint.as_deref())?;
        if qp.status != QpStatus::Optimal {
            let mut out = solution(Formulation::CcopfPfr, &qp, constant, Some(epsilon), Some(deadband));
            out.iterations = iteration;
            out.cuts = cuts;
            out.violation_history = history;
            return Ok(out);
        }
        let moments = moments_at(&qp.x)?;
        let evals = specs
            .par_iter()
            .zip(&scales)
            .map(|(s, &tau)| wcc_evaluate(s, &moments[s.regime.sigma() as usize], &deadband, tau))
            .collect::<Result<Vec<_>>>()?;
        let worst = evals.iter().map(|e| e.log_value - epsilon.ln()).fold(0.0, f64::max);
        history.push(worst);

        let violated: Vec<usize> = (0..specs.len()).filter(|&k| evals[k].value > epsilon + options.tolerance).collect();
        if violated.is_empty() || iteration == options.max_iterations {
            let mut out = solution(Formulation::CcopfPfr, &qp, constant, Some(epsilon), Some(deadband));
            out.status = if violated.is_empty() { Status::Optimal } else { Status::IterationLimit };
            out.iterations = iteration;
            out.cuts = cuts;
            out.violation_history = history;
            out.constraints = specs
                .iter()
                .zip(&scales)
                .zip(&evals)
                .map(|((s, &tau), e)| ConstraintValue {
                    label: s.label(),
                    spec: *s,
                    weight_scale: tau,
                    value: e.value.min(f64::MAX),
                })
                .collect();
            return Ok(out);
        }

        let mut next_hint = qp.active_set();
        for &k in &violated {
            let s = &specs[k];
            let a = s.side.sign() / scales[k];
            let coefficients: Vec<f64> = net.mean_gradient(s.subject).iter().map(|g| a * g).collect();
            let at: f64 = coefficients.iter().zip(&qp.x).map(|(c, x)| c * x).sum();
            let offset = evals[k].log_value - at;
            let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Infeasible(format!("{} cannot be met by any dispatch", s.label())));
            }
            let row: Vec<f64> = coefficients.iter().map(|c| c / norm).collect();
            master.push_inequality(&row, (epsilon.ln() - offset) / norm);
            next_hint.push(master.h.len() - 1);
            cuts.push(Cut { constraint: s.label(), coefficients, offset, iteration });
        }
        hint = Some(next_hint);
    }
    unreachable!("the loop returns on its last iteration")
}
