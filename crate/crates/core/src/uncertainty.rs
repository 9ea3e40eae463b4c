//! Gaussian wind statistics and their regime-wise propagation.
//!
//! Wind at every farm is independent and Gaussian. All fluctuation enters the
//! system through the scalar aggregate deviation `S = Σ(ρ - forecast)`, so each
//! (quantity, frequency) pair is perfectly correlated. The moments below are
//! therefore rank one, and [`SubjectMoments::regression`] gives the
//! one-dimensional representation used by the evaluators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::normal;
use crate::policy::{tilde_alpha, DroopSet, Regime};
use crate::ptdf::PtdfMatrix;

/// Relative determinant floor for [`precision`].
pub const DETERMINANT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WindStatistics {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl WindStatistics {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::InvalidArgument("means and variances differ in length".into()));
        }
        if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("wind variances must be nonnegative".into()));
        }
        Ok(WindStatistics { means, variances })
    }

    /// Means at the forecast, variances from the farm standard deviations.
    pub fn from_case(case: &GridCase) -> Self {
        WindStatistics {
            means: case.forecasts(),
            variances: case.wind_farms.iter().map(|w| w.stdev * w.stdev).collect(),
        }
    }

    /// Mean deviation from the case forecast at each farm.
    pub fn mean_deviation(&self, case: &GridCase) -> Vec<f64> {
        self.means.iter().zip(&case.wind_farms).map(|(m, w)| m - w.forecast).collect()
    }
}

/// Total mean and total variance of the wind injection.
pub fn aggregate_wind(wind: &WindStatistics) -> (f64, f64) {
    (wind.means.iter().sum(), wind.variances.iter().sum())
}

/// Mean, covariance with frequency, and variance of one constrained quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectMoments {
    pub mean: f64,
    pub omega_cov: f64,
    pub var: f64,
}

impl SubjectMoments {
    /// Write the quantity as `mean + beta·(S - E[S]) + r`, with `r` independent
    /// of `S`. Returns `(beta, var(r))`.
    pub fn regression(&self, moments: &SigmaMoments) -> (f64, f64) {
        let v = moments.imbalance_var;
        if v <= 0.0 {
            return (0.0, self.var.max(0.0));
        }
        let beta = self.omega_cov * moments.denominator / v;
        (beta, (self.var - beta * beta * v).max(0.0))
    }
}

/// Regime-conditioned Gaussian parameters of every constrained quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMoments {
    pub regime: Regime,
    /// `Σ(σ·α1 + γ)`, mapping imbalance to frequency.
    pub denominator: f64,
    pub primary_total: f64,
    pub gamma_total: f64,
    pub omega_mean: f64,
    pub omega_var: f64,
    /// Mean and variance of the aggregate deviation `S`.
    pub imbalance_mean: f64,
    pub imbalance_var: f64,
    pub generators: Vec<SubjectMoments>,
    pub lines: Vec<SubjectMoments>,
}

/// Sensitivity of every line flow to each farm's deviation once the
/// generators have responded with shares `alpha`: `M = PTDF_w - PTDF_g·α`.
pub fn line_fluctuation_map(case: &GridCase, ptdf: &PtdfMatrix, alpha: &[f64]) -> DMatrix<f64> {
    let gbus = case.generator_buses();
    let wbus = case.wind_buses();
    DMatrix::from_fn(ptdf.lines(), wbus.len(), |l, w| {
        let absorbed: f64 = gbus.iter().zip(alpha).map(|(&b, a)| ptdf.get(l, b) * a).sum();
        ptdf.get(l, wbus[w]) - absorbed
    })
}

/// Line flows with wind at its forecast and generators at `p0`.
pub fn scheduled_flows(case: &GridCase, ptdf: &PtdfMatrix, p0: &[f64]) -> Vec<f64> {
    let inj = case.injections(p0, &case.forecasts());
    (0..ptdf.lines()).map(|l| ptdf.flow_on(l, &inj)).collect()
}

pub fn sigma_moments(
    case: &GridCase,
    ptdf: &PtdfMatrix,
    droops: &DroopSet,
    p0: &[f64],
    wind: &WindStatistics,
    regime: Regime,
) -> Result<SigmaMoments> {
    if p0.len() != case.generators.len() || wind.means.len() != case.wind_farms.len() {
        return Err(Error::InvalidArgument("dimension mismatch in moment inputs".into()));
    }
    let denominator = droops.denominator(regime);
    if denominator <= 0.0 {
        return Err(Error::Degenerate("regime frequency denominator is zero"));
    }
    let alpha = tilde_alpha(droops, regime)?;
    let deviation = wind.mean_deviation(case);
    let mu_s: f64 = deviation.iter().sum();
    let (_, v_s) = aggregate_wind(wind);

    let generators = p0
        .iter()
        .zip(&alpha)
        .map(|(p, a)| SubjectMoments {
            mean: p - a * mu_s,
            omega_cov: -a * v_s / denominator,
            var: a * a * v_s,
        })
        .collect();

    let m = line_fluctuation_map(case, ptdf, &alpha);
    let base = scheduled_flows(case, ptdf, p0);
    let lines = (0..ptdf.lines())
        .map(|l| {
            let row = m.row(l);
            let mut mean = base[l];
            let mut cov = 0.0;
            let mut var = 0.0;
            for w in 0..deviation.len() {
                mean += row[w] * deviation[w];
                cov += row[w] * wind.variances[w];
                var += row[w] * row[w] * wind.variances[w];
            }
            SubjectMoments { mean, omega_cov: cov / denominator, var }
        })
        .collect();

    Ok(SigmaMoments {
        regime,
        denominator,
        primary_total: droops.primary_total(),
        gamma_total: droops.gamma_total(),
        omega_mean: mu_s / denominator,
        omega_var: v_s / (denominator * denominator),
        imbalance_mean: mu_s,
        imbalance_var: v_s,
        generators,
        lines,
    })
}

/// `(P(A), E[S·1_A], E[S²·1_A])` for `S ~ N(mean, var)` and an interval
/// `A = [lo, hi]`, either end possibly infinite.
pub fn truncated_moments(lo: f64, hi: f64, mean: f64, var: f64) -> (f64, f64, f64) {
    if hi < lo {
        return (0.0, 0.0, 0.0);
    }
    if var <= 0.0 {
        return if (lo..=hi).contains(&mean) { (1.0, mean, mean * mean) } else { (0.0, 0.0, 0.0) };
    }
    let sd = var.sqrt();
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    let (pa, pb) = (normal::pdf(a), normal::pdf(b));
    // x·pdf(x) vanishes at infinity.
    let (xa, xb) = (if a.is_finite() { a * pa } else { 0.0 }, if b.is_finite() { b * pb } else { 0.0 });
    let p = if a > 0.0 { normal::cdf(-a) - normal::cdf(-b) } else { normal::cdf(b) - normal::cdf(a) };
    let first = mean * p + sd * (pa - pb);
    let second = mean * mean * p + 2.0 * mean * sd * (pa - pb) + var * (p + xa - xb);
    (p, first, second)
}

/// Inverse of a 2×2 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionMatrix(pub [[f64; 2]; 2]);

pub fn precision(theta: [[f64; 2]; 2]) -> Result<PrecisionMatrix> {
    let [[a, b], [c, d]] = theta;
    if (b - c).abs() > 1e-12 * (b.abs() + c.abs()).max(1.0) {
        return Err(Error::InvalidArgument("covariance matrix is not symmetric".into()));
    }
    let det = a * d - b * c;
    if !(a > 0.0 && d > 0.0) || det <= DETERMINANT_FLOOR * a * d {
        return Err(Error::SingularCovariance { det });
    }
    Ok(PrecisionMatrix([[d / det, -b / det], [-c / det, a / det]]))
}
