//! DC power transfer distribution factors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{BusId, GridCase};

/// Injections must sum to zero within this many MW.
pub const BALANCE_TOLERANCE: f64 = 1e-6;

/// Line-by-bus flow sensitivities for a fixed slack bus.
///
/// `entries[(l, b)]` is the flow on line `l` (positive from `from` to `to`)
/// caused by injecting 1 MW at bus position `b` and withdrawing it at the
/// slack. The slack column is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    pub entries: DMatrix<f64>,
    pub slack_bus: BusId,
}

impl PtdfMatrix {
    pub fn lines(&self) -> usize {
        self.entries.nrows()
    }

    pub fn buses(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.entries[(line, bus)]
    }

    /// Flow on one line without the balance check.
    pub fn flow_on(&self, line: usize, injections: &[f64]) -> f64 {
        self.entries
            .row(line)
            .iter()
            .zip(injections)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn build_ptdf(case: &GridCase) -> Result<PtdfMatrix> {
    let n = case.bus_count();
    let index = case.bus_index();
    let slack = index[&case.slack_bus];
    let mut b = DMatrix::<f64>::zeros(n, n);
    for line in &case.lines {
        let (i, j) = (index[&line.from], index[&line.to]);
        let y = line.susceptance;
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced = b.select_rows(&keep).select_columns(&keep);
    let inverse = reduced.lu().try_inverse().ok_or_else(|| {
        Error::SingularNetwork(format!("slack bus {} does not reach every bus", case.slack_bus))
    })?;

    // Expand back to full size with a zero row and column at the slack.
    let mut x = DMatrix::<f64>::zeros(n, n);
    for (a, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            x[(i, j)] = inverse[(a, c)];
        }
    }
    let mut entries = DMatrix::<f64>::zeros(case.lines.len(), n);
    for (l, line) in case.lines.iter().enumerate() {
        let (i, j) = (index[&line.from], index[&line.to]);
        for k in 0..n {
            entries[(l, k)] = line.susceptance * (x[(i, k)] - x[(j, k)]);
        }
    }
    Ok(PtdfMatrix { entries, slack_bus: case.slack_bus })
}

/// Line flows for a balanced injection vector, indexed by bus position.
pub fn dc_flows(ptdf: &PtdfMatrix, injections: &[f64]) -> Result<Vec<f64>> {
    if injections.len() != ptdf.buses() {
        return Err(Error::InvalidArgument(format!(
            "expected {} injections, got {}",
            ptdf.buses(),
            injections.len()
        )));
    }
    let net: f64 = injections.iter().sum();
    if net.abs() > BALANCE_TOLERANCE {
        return Err(Error::Imbalance { net });
    }
    let flows = &ptdf.entries * DVector::from_column_slice(injections);
    Ok(flows.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Generator, Line};

    fn triangle(slack: BusId) -> GridCase {
        let gen = Generator {
            bus: 1,
            p_min: 0.0,
            p_max: 100.0,
            cost_quad: 1.0,
            cost_lin: 0.0,
            cost_const: 0.0,
            alpha1: 1.0,
            alpha2: 1.0,
            gamma: 0.1,
        };
        let line = |from, to| Line { from, to, susceptance: 5.0, limit: 100.0 };
        GridCase {
            slack_bus: slack,
            buses: (1..=3).map(|id| Bus { id, load: 0.0 }).collect(),
            generators: vec![gen],
            lines: vec![line(1, 2), line(1, 3), line(3, 2)],
            wind_farms: vec![],
        }
    }

    // Solve B theta = p directly with bus 2 grounded and read off flows.
    fn brute_force_triangle(p1: f64, p3: f64) -> [f64; 3] {
        let y = 5.0;
        // Unknowns theta1, theta3; rows are the nodal balances at buses 1 and 3.
        let (a, b, c, d) = (2.0 * y, -y, -y, 2.0 * y);
        let det = a * d - b * c;
        let t1 = (d * p1 - b * p3) / det;
        let t3 = (a * p3 - c * p1) / det;
        [y * t1, y * (t1 - t3), y * t3]
    }

    #[test]
    fn single_line_carries_everything() {
        let mut case = triangle(1);
        case.buses.truncate(2);
        case.lines.truncate(1);
        let ptdf = build_ptdf(&case).unwrap();
        assert_eq!(ptdf.get(0, 0), 0.0);
        assert!((ptdf.get(0, 1) + 1.0).abs() < 1e-12);
        let flows = dc_flows(&ptdf, &[-50.0, 50.0]).unwrap();
        assert!((flows[0].abs() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_splits_two_thirds() {
        let ptdf = build_ptdf(&triangle(2)).unwrap();
        let oracle = brute_force_triangle(1.0, 0.0);
        for l in 0..3 {
            assert!((ptdf.get(l, 0) - oracle[l]).abs() < 1e-12);
        }
        assert!((ptdf.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((ptdf.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((ptdf.get(2, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!(ptdf.entries.column(1).iter().all(|&v| v == 0.0));

        let flows = dc_flows(&ptdf, &[90.0, -90.0, 0.0]).unwrap();
        assert!((flows[0] - 60.0).abs() < 1e-9);
        assert!((flows[1] - 30.0).abs() < 1e-9);
        assert!((flows[2] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn zero_injection_zero_flow() {
        let ptdf = build_ptdf(&triangle(1)).unwrap();
        assert!(dc_flows(&ptdf, &[0.0; 3]).unwrap().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn unbalanced_injection_rejected() {
        let ptdf = build_ptdf(&triangle(1)).unwrap();
        let err = dc_flows(&ptdf, &[1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Imbalance { .. }));
    }

    #[test]
    fn islanded_bus_is_singular() {
        // Bypass validation to reach the factorization.
        let mut case = triangle(1);
        case.lines.retain(|l| l.to != 3 && l.from != 3);
        assert!(matches!(build_ptdf(&case), Err(Error::SingularNetwork(_))));
    }
}
