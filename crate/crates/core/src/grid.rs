//! Grid case data: buses, generators, lines and wind farms.
//!
//! Cases are read from a TOML document with the top-level keys `slack_bus`,
//! `buses`, `generators`, `lines` and `wind_farms`. Units are MW for power and
//! per-unit for susceptance. Every record is checked on load and the error
//! names the offending record.

use std::collections::{HashMap, VecDeque};
use std::io::Read;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type BusId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    /// Active power demand, MW.
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    /// Cost is `cost_quad * p^2 + cost_lin * p + cost_const`.
    pub cost_quad: f64,
    pub cost_lin: f64,
    pub cost_const: f64,
    /// Primary droop participation.
    pub alpha1: f64,
    /// Secondary (AGC) participation.
    pub alpha2: f64,
    /// Natural damping.
    pub gamma: f64,
}

impl Generator {
    pub fn cost(&self, p: f64) -> f64 {
        self.cost_quad * p * p + self.cost_lin * p + self.cost_const
    }
}

/// A transmission line. Flow is positive from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub susceptance: f64,
    /// Symmetric thermal limit, MW.
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFarm {
    pub bus: BusId,
    /// Scheduled (forecast) output, MW.
    pub forecast: f64,
    pub stdev: f64,
}

/// An immutable, validated problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub slack_bus: BusId,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub wind_farms: Vec<WindFarm>,
}

/// Read and validate a case document.
pub fn load_case<R: Read>(mut source: R) -> Result<GridCase> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| Error::Parse(e.to_string()))?;
    GridCase::from_toml_str(&text)
}

/// Scale every line limit by `1 - line_derate` and every load by `load_scale`.
pub fn apply_case_modifiers(case: &GridCase, line_derate: f64, load_scale: f64) -> Result<GridCase> {
    if !(0.0..1.0).contains(&line_derate) {
        return Err(Error::InvalidArgument(format!(
            "line derate {line_derate} must lie in [0, 1)"
        )));
    }
    if !(load_scale > 0.0 && load_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "load scale {load_scale} must be positive"
        )));
    }
    let mut out = case.clone();
    for line in &mut out.lines {
        line.limit *= 1.0 - line_derate;
    }
    for bus in &mut out.buses {
        bus.load *= load_scale;
    }
    Ok(out)
}

impl GridCase {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let case: GridCase = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid case serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Map from bus id to its position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn total_forecast(&self) -> f64 {
        self.wind_farms.iter().map(|w| w.forecast).sum()
    }

    pub fn generator_buses(&self) -> Vec<usize> {
        let index = self.bus_index();
        self.generators.iter().map(|g| index[&g.bus]).collect()
    }

    pub fn wind_buses(&self) -> Vec<usize> {
        let index = self.bus_index();
        self.wind_farms.iter().map(|w| index[&w.bus]).collect()
    }

    /// Net nodal injections: generation plus wind minus load.
    pub fn injections(&self, generation: &[f64], wind: &[f64]) -> Vec<f64> {
        let index = self.bus_index();
        let mut inj: Vec<f64> = self.buses.iter().map(|b| -b.load).collect();
        for (g, p) in self.generators.iter().zip(generation) {
            inj[index[&g.bus]] += p;
        }
        for (w, r) in self.wind_farms.iter().zip(wind) {
            inj[index[&w.bus]] += r;
        }
        inj
    }

    pub fn forecasts(&self) -> Vec<f64> {
        self.wind_farms.iter().map(|w| w.forecast).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let mut index = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return fail(format!("bus {} appears more than once", bus.id));
            }
            if !(bus.load >= 0.0 && bus.load.is_finite()) {
                return fail(format!("bus {}: load {} must be nonnegative", bus.id, bus.load));
            }
        }
        if !index.contains_key(&self.slack_bus) {
            return fail(format!("slack bus {} does not exist", self.slack_bus));
        }
        if self.generators.is_empty() {
            return fail("case has no generators".into());
        }
        for (k, g) in self.generators.iter().enumerate() {
            if !index.contains_key(&g.bus) {
                return fail(format!("generator {k}: bus {} does not exist", g.bus));
            }
            if !(g.p_min >= 0.0 && g.p_min <= g.p_max && g.p_max.is_finite()) {
                return fail(format!(
                    "generator {k}: limits [{}, {}] must satisfy 0 <= p_min <= p_max",
                    g.p_min, g.p_max
                ));
            }
            if !(g.cost_quad >= 0.0) || !g.cost_lin.is_finite() || !g.cost_const.is_finite() {
                return fail(format!("generator {k}: cost must be convex and finite"));
            }
            for (name, v) in [("alpha1", g.alpha1), ("alpha2", g.alpha2), ("gamma", g.gamma)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return fail(format!("generator {k}: {name} = {v} must be nonnegative"));
                }
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            for end in [l.from, l.to] {
                if !index.contains_key(&end) {
                    return fail(format!("line {k}: bus {end} does not exist"));
                }
            }
            if l.from == l.to {
                return fail(format!("line {k}: both ends at bus {}", l.from));
            }
            if !(l.susceptance > 0.0 && l.susceptance.is_finite()) {
                return fail(format!("line {k}: susceptance {} must be positive", l.susceptance));
            }
            if !(l.limit > 0.0) {
                return fail(format!("line {k}: negative or zero limit {}", l.limit));
            }
        }
        for (k, w) in self.wind_farms.iter().enumerate() {
            if !index.contains_key(&w.bus) {
                return fail(format!("wind farm {k}: bus {} does not exist", w.bus));
            }
            if !(w.forecast >= 0.0 && w.stdev >= 0.0) {
                return fail(format!("wind farm {k}: forecast and stdev must be nonnegative"));
            }
        }
        self.check_connected(&index)
    }

    fn check_connected(&self, index: &HashMap<BusId, usize>) -> Result<()> {
        let n = self.buses.len();
        let mut adjacency = vec![Vec::new(); n];
        for l in &self.lines {
            let (a, b) = (index[&l.from], index[&l.to]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([index[&self.slack_bus]]);
        seen[index[&self.slack_bus]] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Validation(format!(
                "grid is disconnected: bus {} cannot reach the slack bus",
                self.buses[i].id
            ))),
            None => Ok(()),
        }
    }
}
