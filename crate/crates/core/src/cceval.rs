//! Chance-constraint evaluation.
//!
//! Two families live here. The standard chance constraints of an affine
//! policy reduce to tightened deterministic limits ([`analytic_cc_tightening`]).
//! The weighted constraints of the dead-zone policy bound
//! `E[w(x)·1{regime}]` for an exponential weight `w`; [`wcc_evaluate`]
//! computes that expectation as a one-dimensional integral over the aggregate
//! wind deviation.
//!
//! The weight is normalized to one at the limit `L`: `exp((x - L)/τ)` on
//! upper sides and `exp((L - x)/τ)` on lower sides. An unnormalized weight
//! `exp(x/τ)` is at least one wherever `x ≥ 0`, so a bound `ε < P(regime)`
//! could never hold. Normalizing keeps the weight above the violation
//! indicator, so `E[w·1{regime}] ≤ ε` implies `P(violation, regime) ≤ ε`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::normal::gaussian_quantile;
use crate::policy::{tilde_alpha, Deadband, DroopSet, Regime, ResponseModel};
use crate::ptdf::PtdfMatrix;
use crate::quadrature::{integrate, Tolerance};
use crate::uncertainty::{line_fluctuation_map, scheduled_flows, SigmaMoments, SubjectMoments, WindStatistics};

/// Integration window half-width, in standard deviations of the tilted law.
const WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum Subject {
    Generator(usize),
    Line(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub subject: Subject,
    pub side: Side,
    pub regime: Regime,
    pub epsilon: f64,
    /// The physical limit on the subject, MW.
    pub limit: f64,
}

impl ConstraintSpec {
    /// Look up the limit for `subject` and `side` in `case`.
    pub fn new(case: &GridCase, subject: Subject, side: Side, regime: Regime, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must lie in (0, 1)")));
        }
        let limit = match subject {
            Subject::Generator(i) => {
                let g = case.generators.get(i).ok_or_else(|| bad_index("generator", i))?;
                match side {
                    Side::Upper => g.p_max,
                    Side::Lower => g.p_min,
                }
            }
            Subject::Line(l) => {
                let line = case.lines.get(l).ok_or_else(|| bad_index("line", l))?;
                side.sign() * line.limit
            }
        };
        Ok(ConstraintSpec { subject, side, regime, epsilon, limit })
    }

    pub fn label(&self) -> String {
        let (kind, i) = match self.subject {
            Subject::Generator(i) => ("gen", i),
            Subject::Line(l) => ("line", l),
        };
        let side = match self.side {
            Side::Upper => "upper",
            Side::Lower => "lower",
        };
        format!("{kind}{i}-{side}-s{}", self.regime.sigma())
    }

    pub fn moments<'a>(&self, moments: &'a SigmaMoments) -> &'a SubjectMoments {
        match self.subject {
            Subject::Generator(i) => &moments.generators[i],
            Subject::Line(l) => &moments.lines[l],
        }
    }

    /// Whether `x` lies beyond the limit.
    pub fn violated_by(&self, x: f64, tolerance: f64) -> bool {
        match self.side {
            Side::Upper => x > self.limit + tolerance,
            Side::Lower => x < self.limit - tolerance,
        }
    }
}

fn bad_index(kind: &str, i: usize) -> Error {
    Error::InvalidArgument(format!("{kind} {i} does not exist"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WccEvaluation {
    pub value: f64,
    /// `ln value`; `-inf` when the regime event is impossible.
    pub log_value: f64,
    /// Derivative of `value` with respect to a shift of the subject's mean.
    pub d_value_d_mean: f64,
}

/// The regime event as a set of aggregate deviations `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeEvent {
    pub regime: Regime,
    /// Largest |S| inside the dead zone.
    pub limit: f64,
}

impl RegimeEvent {
    pub fn new(regime: Regime, deadband: &Deadband, moments: &SigmaMoments) -> Self {
        RegimeEvent {
            regime,
            limit: deadband.imbalance_limit(moments.primary_total, moments.gamma_total),
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        let inside = s.abs() <= self.limit;
        match self.regime {
            Regime::DeadZone => inside,
            Regime::Primary => !inside,
        }
    }

    /// The event as a union of closed intervals in `S`.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        match self.regime {
            Regime::DeadZone => vec![(-self.limit, self.limit)],
            Regime::Primary => vec![(f64::NEG_INFINITY, -self.limit), (self.limit, f64::INFINITY)],
        }
    }

    /// `ln P(S ∈ event)` for `S ~ N(center, var)`, by quadrature.
    pub fn log_probability(&self, center: f64, var: f64) -> Result<f64> {
        if var <= 0.0 {
            return Ok(if self.contains(center) { 0.0 } else { f64::NEG_INFINITY });
        }
        let sd = var.sqrt();
        // Each piece in standardized units, clipped to a window around its
        // point nearest the mode.
        let windows: Vec<(f64, f64, f64)> = self
            .pieces()
            .into_iter()
            .filter_map(|(lo, hi)| {
                let (lo, hi) = ((lo - center) / sd, (hi - center) / sd);
                if hi <= lo {
                    return None;
                }
                let near = 0f64.clamp(lo, hi);
                Some((near, lo.max(near - WINDOW), hi.min(near + WINDOW)))
            })
            .collect();
        let Some(peak) = windows.iter().map(|w| 0.5 * w.0 * w.0).reduce(f64::min) else {
            return Ok(f64::NEG_INFINITY);
        };
        let tol = Tolerance { absolute: 1e-14, relative: 1e-12, max_intervals: 4000 };
        let mut total = 0.0;
        for &(near, lo, hi) in &windows {
            if 0.5 * near * near - peak > 745.0 || hi <= lo {
                continue;
            }
            let r = integrate(|z| (peak - 0.5 * z * z).exp(), &[lo, near, hi], tol)?;
            total += r.value;
        }
        Ok(-peak - 0.5 * (2.0 * std::f64::consts::PI).ln() + total.ln())
    }
}

/// `ln E[exp(a·(x - limit))·1{S ∈ event}]` with `x = mean + beta·(S - mu_s) + r`.
fn log_weighted(a: f64, gap: f64, beta: f64, resid_var: f64, mu_s: f64, v_s: f64, event: &RegimeEvent) -> Result<f64> {
    let exponent = a * gap + 0.5 * a * a * (resid_var + beta * beta * v_s);
    let log_p = event.log_probability(mu_s + a * beta * v_s, v_s)?;
    Ok(exponent + log_p)
}

/// Weighted chance-constraint value `E[w(x)·1{regime}]` and its derivative
/// with respect to the subject's mean.
pub fn wcc_evaluate(spec: &ConstraintSpec, moments: &SigmaMoments, deadband: &Deadband, weight_scale: f64) -> Result<WccEvaluation> {
    if !(weight_scale > 0.0 && weight_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("weight scale {weight_scale} must be positive")));
    }
    if moments.regime != spec.regime {
        return Err(Error::InvalidArgument("moments belong to the other regime".into()));
    }
    let subject = spec.moments(moments);
    let (beta, resid) = subject.regression(moments);
    let a = spec.side.sign() / weight_scale;
    let event = RegimeEvent::new(spec.regime, deadband, moments);
    let log_value = log_weighted(
        a,
        subject.mean - spec.limit,
        beta,
        resid,
        moments.imbalance_mean,
        moments.imbalance_var,
        &event,
    )?;
    let value = log_value.exp();
    Ok(WccEvaluation { value, log_value, d_value_d_mean: a * value })
}

/// How the weight scale τ is chosen for each weighted constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScaleRule {
    /// The τ that minimizes the implied margin between the mean and the limit.
    Tightest,
    /// The limit itself (guarded against small limits).
    Limit,
    /// A constant, MW.
    Fixed(f64),
}

/// `|limit|`, or `max(|limit|, 0.05·p_max)` when the limit is below 1 MW.
pub fn limit_scale(limit: f64, capacity: f64) -> f64 {
    let s = limit.abs();
    if s < 1.0 {
        s.max(0.05 * capacity)
    } else {
        s
    }
}

/// Capacity used by the small-limit guard: `p_max` or the line rating.
pub fn capacity(case: &GridCase, subject: Subject) -> f64 {
    match subject {
        Subject::Generator(i) => case.generators[i].p_max,
        Subject::Line(l) => case.lines[l].limit,
    }
}

/// The distance the mean must keep from the limit for the constraint to hold
/// with weight scale `tau`. Independent of the mean.
pub fn implied_margin(spec: &ConstraintSpec, moments: &SigmaMoments, deadband: &Deadband, tau: f64) -> Result<f64> {
    let subject = spec.moments(moments);
    let (beta, resid) = subject.regression(moments);
    let a = spec.side.sign() / tau;
    let event = RegimeEvent::new(spec.regime, deadband, moments);
    let log_k = log_weighted(a, 0.0, beta, resid, moments.imbalance_mean, moments.imbalance_var, &event)?;
    Ok(tau * (log_k - spec.epsilon.ln()))
}

/// Resolve a rule to a concrete weight scale for one constraint.
pub fn weight_scale(
    rule: WeightScaleRule,
    spec: &ConstraintSpec,
    moments: &SigmaMoments,
    deadband: &Deadband,
    capacity: f64,
) -> Result<f64> {
    let nominal = limit_scale(spec.limit, capacity);
    match rule {
        WeightScaleRule::Limit => Ok(nominal),
        WeightScaleRule::Fixed(t) if t > 0.0 && t.is_finite() => Ok(t),
        WeightScaleRule::Fixed(t) => Err(Error::InvalidArgument(format!("weight scale {t} must be positive"))),
        WeightScaleRule::Tightest => {
            let h = |lt: f64| implied_margin(spec, moments, deadband, lt.exp());
            if h(nominal.ln())? == f64::NEG_INFINITY {
                return Ok(nominal);
            }
            // The margin is convex in τ, hence unimodal in ln τ.
            let (mut lo, mut hi) = (nominal.ln() - 6.0 * std::f64::consts::LN_10, nominal.ln());
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = hi - r * (hi - lo);
            let mut x2 = lo + r * (hi - lo);
            let (mut f1, mut f2) = (h(x1)?, h(x2)?);
            for _ in 0..80 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - r * (hi - lo);
                    f1 = h(x1)?;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + r * (hi - lo);
                    f2 = h(x2)?;
                }
            }
            Ok((0.5 * (lo + hi)).exp())
        }
    }
}

/// Tightened limits on the mean dispatch of the affine (primary-active) policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Tightening {
    pub z: f64,
    pub gen_std: Vec<f64>,
    pub gen_upper: Vec<f64>,
    pub gen_lower: Vec<f64>,
    pub line_std: Vec<f64>,
    /// Mean line flows must lie in `[-line_bound, line_bound]`.
    pub line_bound: Vec<f64>,
}

/// `z_{1-ε}·std`, the back-off that holds a Gaussian quantity's tail at ε.
pub fn gaussian_margin(std: f64, epsilon: f64) -> Result<f64> {
    Ok(gaussian_quantile(1.0 - epsilon)? * std)
}

pub fn analytic_cc_tightening(
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    wind: &WindStatistics,
    epsilon: f64,
) -> Result<Tightening> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must lie in (0, 1)")));
    }
    let z = gaussian_quantile(1.0 - epsilon)?;
    let alpha = tilde_alpha(droops, Regime::Primary)?;
    let total_var: f64 = wind.variances.iter().sum();
    let gen_std: Vec<f64> = alpha.iter().map(|a| a * total_var.sqrt()).collect();
    let mut gen_upper = Vec::with_capacity(alpha.len());
    let mut gen_lower = Vec::with_capacity(alpha.len());
    for (i, (g, s)) in case.generators.iter().zip(&gen_std).enumerate() {
        let (u, l) = (g.p_max - z * s, g.p_min + z * s);
        if u < l {
            return Err(Error::Infeasible(format!("generator {i}: [{l:.3}, {u:.3}]")));
        }
        gen_upper.push(u);
        gen_lower.push(l);
    }
    let m = line_fluctuation_map(case, ptdf, &alpha);
    let line_std: Vec<f64> = (0..ptdf.lines())
        .map(|l| {
            m.row(l)
                .iter()
                .zip(&wind.variances)
                .map(|(c, v)| c * c * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut line_bound = Vec::with_capacity(line_std.len());
    for (l, (line, s)) in case.lines.iter().zip(&line_std).enumerate() {
        let b = line.limit - z * s;
        if b < 0.0 {
            return Err(Error::Infeasible(format!("line {l}: back-off {:.3} exceeds rating", z * s)));
        }
        line_bound.push(b);
    }
    Ok(Tightening { z, gen_std, gen_upper, gen_lower, line_std, line_bound })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

const CHUNK: usize = 1 << 14;

/// The random stream shared by the Monte Carlo oracles: chunk `k` of the
/// draws comes from ChaCha8 seeded with `seed` on stream `k`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

struct Replay<'a> {
    spec: &'a ConstraintSpec,
    wind: &'a WindStatistics,
    forecast: Vec<f64>,
    p0: &'a [f64],
    model: ResponseModel,
    scheduled: f64,
    wind_row: Vec<f64>,
    gen_row: Vec<f64>,
}

impl<'a> Replay<'a> {
    fn new(
        spec: &'a ConstraintSpec,
        case: &GridCase,
        ptdf: &PtdfMatrix,
        droops: &DroopSet,
        p0: &'a [f64],
        wind: &'a WindStatistics,
        deadband: &Deadband,
    ) -> Result<Self> {
        let (scheduled, wind_row, gen_row) = match spec.subject {
            Subject::Line(l) => (
                scheduled_flows(case, ptdf, p0)[l],
                case.wind_buses().iter().map(|&b| ptdf.get(l, b)).collect(),
                case.generator_buses().iter().map(|&b| ptdf.get(l, b)).collect(),
            ),
            Subject::Generator(_) => (0.0, vec![], vec![]),
        };
        Ok(Replay {
            spec,
            wind,
            forecast: case.forecasts(),
            p0,
            model: ResponseModel::new(droops, *deadband)?,
            scheduled,
            wind_row,
            gen_row,
        })
    }

    /// Subject value and regime for one realization of the wind.
    fn draw(&self, rng: &mut ChaCha8Rng, rho: &mut [f64]) -> (f64, Regime) {
        for (w, r) in rho.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *r = self.wind.means[w] + self.wind.variances[w].sqrt() * z - self.forecast[w];
        }
        let response = self.model.respond_total(self.p0, rho.iter().sum());
        let x = match self.spec.subject {
            Subject::Generator(i) => response.p[i],
            Subject::Line(_) => {
                let wind: f64 = self.wind_row.iter().zip(rho.iter()).map(|(a, b)| a * b).sum();
                let gens: f64 = self
                    .gen_row
                    .iter()
                    .zip(self.p0.iter().zip(&response.p))
                    .map(|(a, (p0, p))| a * (p - p0))
                    .sum();
                self.scheduled + wind + gens
            }
        };
        (x, response.regime)
    }

    fn estimate<F: Fn(f64, Regime) -> f64 + Sync>(&self, n: usize, seed: u64, f: F) -> McEstimate
    where
        Self: Sync,
    {
        let chunks = n.div_ceil(CHUNK);
        let parts: Vec<(usize, f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|k| {
                let count = CHUNK.min(n - k * CHUNK);
                let mut rng = chunk_rng(seed, k as u64);
                let mut rho = vec![0.0; self.wind.means.len()];
                let (mut mean, mut m2) = (0.0, 0.0);
                for j in 0..count {
                    let (x, regime) = self.draw(&mut rng, &mut rho);
                    let y = f(x, regime);
                    let d = y - mean;
                    mean += d / (j + 1) as f64;
                    m2 += d * (y - mean);
                }
                (count, mean, m2)
            })
            .collect();
        let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for (c, m, s) in parts {
            let total = count + c;
            let d = m - mean;
            mean += d * c as f64 / total as f64;
            m2 += s + d * d * (count as f64) * (c as f64) / total as f64;
            count = total;
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        McEstimate { mean, std_error: (var / n as f64).sqrt(), n }
    }
}

/// Sample estimate of the weighted constraint value, replaying the dead-zone
/// policy on every draw.
#[allow(clippy::too_many_arguments)]
pub fn wcc_mc_oracle(
    spec: &ConstraintSpec,
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    p0: &[f64],
    wind: &WindStatistics,
    deadband: &Deadband,
    weight_scale: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let replay = Replay::new(spec, case, ptdf, droops, p0, wind, deadband)?;
    let a = spec.side.sign() / weight_scale;
    Ok(replay.estimate(n, seed, |x, regime| {
        if regime == spec.regime {
            (a * (x - spec.limit)).exp()
        } else {
            0.0
        }
    }))
}

/// Sample estimate of `P(limit violated and regime)`.
#[allow(clippy::too_many_arguments)]
pub fn step_cc_probability(
    spec: &ConstraintSpec,
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    p0: &[f64],
    wind: &WindStatistics,
    deadband: &Deadband,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let replay = Replay::new(spec, case, ptdf, droops, p0, wind, deadband)?;
    Ok(replay.estimate(n, seed, |x, regime| {
        if regime == spec.regime && spec.violated_by(x, 0.0) {
            1.0
        } else {
            0.0
        }
    }))
}
