//! Frequency response: equilibria, renormalized droop and the dead zone.
//!
//! All imbalances here are wind deviations from the scheduled forecast, in MW.
//! A positive deviation (more wind than scheduled) lowers conventional output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopSet {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DroopSet {
    pub fn new(alpha1: Vec<f64>, alpha2: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if alpha1.len() != alpha2.len() || alpha1.len() != gamma.len() {
            return Err(Error::InvalidArgument("droop vectors differ in length".into()));
        }
        let all = alpha1.iter().chain(&alpha2).chain(&gamma);
        if all.clone().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("droop coefficients must be nonnegative".into()));
        }
        let set = DroopSet { alpha1, alpha2, gamma };
        if set.alpha2_total() <= 0.0 {
            return Err(Error::Degenerate("sum of secondary participation is zero"));
        }
        if set.primary_total() <= 0.0 {
            return Err(Error::Degenerate("sum of primary droop and damping is zero"));
        }
        Ok(set)
    }

    pub fn from_case(case: &GridCase) -> Result<Self> {
        let g = &case.generators;
        DroopSet::new(
            g.iter().map(|g| g.alpha1).collect(),
            g.iter().map(|g| g.alpha2).collect(),
            g.iter().map(|g| g.gamma).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.alpha1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha1.is_empty()
    }

    pub fn gamma_total(&self) -> f64 {
        self.gamma.iter().sum()
    }

    pub fn alpha2_total(&self) -> f64 {
        self.alpha2.iter().sum()
    }

    /// `Σ(α1 + γ)`.
    pub fn primary_total(&self) -> f64 {
        self.alpha1.iter().sum::<f64>() + self.gamma_total()
    }

    /// Frequency denominator of a regime: `Σ(σ·α1 + γ)`.
    pub fn denominator(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Primary => self.primary_total(),
            Regime::DeadZone => self.gamma_total(),
        }
    }
}

/// Dead-zone regime σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// σ = 0: frequency inside the dead zone, governors idle.
    DeadZone,
    /// σ = 1: frequency outside the dead zone, primary droop acts.
    Primary,
}

impl Regime {
    pub const BOTH: [Regime; 2] = [Regime::DeadZone, Regime::Primary];

    pub fn sigma(self) -> u8 {
        match self {
            Regime::DeadZone => 0,
            Regime::Primary => 1,
        }
    }
}

/// Which frequency the dead zone is tested against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerRule {
    /// The equilibrium with primary droop engaged.
    #[default]
    WithPrimary,
    /// The free (damping-only) equilibrium.
    FreeResponse,
}

/// Dead-zone width expressed as an aggregate imbalance in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deadband {
    pub threshold: f64,
    #[serde(default)]
    pub trigger: TriggerRule,
}

impl Deadband {
    pub fn new(threshold: f64) -> Result<Self> {
        Deadband::with_trigger(threshold, TriggerRule::WithPrimary)
    }

    pub fn with_trigger(threshold: f64, trigger: TriggerRule) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!("dead zone {threshold} must be nonnegative")));
        }
        Ok(Deadband { threshold, trigger })
    }

    /// Largest |imbalance| that stays inside the dead zone.
    ///
    /// Takes the two frequency denominators `Σ(α1+γ)` and `Σγ`.
    pub fn imbalance_limit(&self, primary_total: f64, gamma_total: f64) -> f64 {
        match self.trigger {
            TriggerRule::WithPrimary => self.threshold,
            TriggerRule::FreeResponse => self.threshold * gamma_total / primary_total,
        }
    }

    pub fn regime(&self, imbalance: f64, droops: &DroopSet) -> Regime {
        let limit = self.imbalance_limit(droops.primary_total(), droops.gamma_total());
        if imbalance.abs() > limit {
            Regime::Primary
        } else {
            Regime::DeadZone
        }
    }
}

pub fn omega_uncontrolled(rho_total: f64, droops: &DroopSet) -> Result<f64> {
    let d = droops.gamma_total();
    if d <= 0.0 {
        return Err(Error::Degenerate("sum of damping is zero"));
    }
    Ok(rho_total / d)
}

pub fn omega_primary(rho_total: f64, droops: &DroopSet, primary_active: bool) -> Result<f64> {
    if !primary_active {
        return omega_uncontrolled(rho_total, droops);
    }
    let d = droops.primary_total();
    if d <= 0.0 {
        return Err(Error::Degenerate("sum of primary droop and damping is zero"));
    }
    Ok(rho_total / d)
}

/// Share of the imbalance each generator carries once secondary control settles.
pub fn tilde_alpha(droops: &DroopSet, regime: Regime) -> Result<Vec<f64>> {
    let a2 = droops.alpha2_total();
    if a2 <= 0.0 {
        return Err(Error::Degenerate("sum of secondary participation is zero"));
    }
    match regime {
        Regime::DeadZone => Ok(droops.alpha2.iter().map(|v| v / a2).collect()),
        Regime::Primary => {
            let d = droops.primary_total();
            let g = droops.gamma_total();
            Ok(droops
                .alpha1
                .iter()
                .zip(&droops.alpha2)
                .map(|(a1, a2i)| (a1 + a2i * g / a2) / d)
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResponse {
    pub p: Vec<f64>,
    pub omega1: f64,
    pub regime: Regime,
}

/// Precomputed response coefficients for repeated replay.
#[derive(Debug, Clone)]
pub struct ResponseModel {
    pub deadband: Deadband,
    alpha: [Vec<f64>; 2],
    denominator: [f64; 2],
    limit: f64,
}

impl ResponseModel {
    pub fn new(droops: &DroopSet, deadband: Deadband) -> Result<Self> {
        Ok(ResponseModel {
            deadband,
            alpha: [
                tilde_alpha(droops, Regime::DeadZone)?,
                tilde_alpha(droops, Regime::Primary)?,
            ],
            denominator: [droops.denominator(Regime::DeadZone), droops.denominator(Regime::Primary)],
            limit: deadband.imbalance_limit(droops.primary_total(), droops.gamma_total()),
        })
    }

    pub fn alpha(&self, regime: Regime) -> &[f64] {
        &self.alpha[regime.sigma() as usize]
    }

    pub fn regime(&self, imbalance: f64) -> Regime {
        if imbalance.abs() > self.limit {
            Regime::Primary
        } else {
            Regime::DeadZone
        }
    }

    pub fn respond_total(&self, p0: &[f64], imbalance: f64) -> PolicyResponse {
        self.respond_in_regime(p0, imbalance, self.regime(imbalance))
    }

    pub fn respond_in_regime(&self, p0: &[f64], imbalance: f64, regime: Regime) -> PolicyResponse {
        let alpha = self.alpha(regime);
        let p = p0.iter().zip(alpha).map(|(p, a)| p - a * imbalance).collect();
        let omega1 = imbalance / self.denominator[regime.sigma() as usize];
        PolicyResponse { p, omega1, regime }
    }
}

/// Realized outputs after the dead-zone policy absorbs per-farm deviations `rho`.
pub fn respond(p0: &[f64], droops: &DroopSet, deadband: Deadband, rho: &[f64]) -> Result<PolicyResponse> {
    if p0.len() != droops.len() {
        return Err(Error::InvalidArgument("set points and droops differ in length".into()));
    }
    if p0.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("set points must be finite".into()));
    }
    let model = ResponseModel::new(droops, deadband)?;
    Ok(model.respond_total(p0, rho.iter().sum()))
}

/// Response with the regime forced, bypassing the dead-zone test.
pub fn respond_in_regime(p0: &[f64], droops: &DroopSet, regime: Regime, rho: &[f64]) -> Result<PolicyResponse> {
    let model = ResponseModel::new(droops, Deadband::new(0.0)?)?;
    Ok(model.respond_in_regime(p0, rho.iter().sum(), regime))
}
