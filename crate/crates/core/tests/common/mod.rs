#![allow(dead_code)]

use ccpfr::grid::{Bus, GridCase, Generator, Line, WindFarm};
use ccpfr::solver::QpProblem;
use nalgebra::{DMatrix, DVector};

pub fn fixture() -> GridCase {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/rts118.toml");
    let text = std::fs::read_to_string(path).unwrap();
    GridCase::from_toml_str(&text).unwrap()
}

/// The fixture with the case-study modifiers applied.
pub fn study_case() -> GridCase {
    ccpfr::grid::apply_case_modifiers(&fixture(), 0.25, 1.10).unwrap()
}

pub fn generator(bus: u32, p_max: f64, cost_lin: f64, alpha: f64) -> Generator {
    Generator {
        bus,
        p_min: 0.0,
        p_max,
        cost_quad: 0.01,
        cost_lin,
        cost_const: 0.0,
        alpha1: alpha,
        alpha2: alpha,
        gamma: alpha / 9.0,
    }
}

/// Two buses, a cheap generator at bus 1 and an expensive one at bus 2 next
/// to the load and the wind farm.
pub fn two_bus(line_limit: f64) -> GridCase {
    GridCase {
        slack_bus: 1,
        buses: vec![Bus { id: 1, load: 0.0 }, Bus { id: 2, load: 150.0 }],
        generators: vec![generator(1, 100.0, 10.0, 0.5), generator(2, 300.0, 30.0, 0.5)],
        lines: vec![Line { from: 1, to: 2, susceptance: 10.0, limit: line_limit }],
        wind_farms: vec![WindFarm { bus: 2, forecast: 20.0, stdev: 10.0 }],
    }
}

/// Brute-force QP oracle: solve the KKT system for every subset of
/// inequalities treated as equalities and keep the best primal-dual
/// feasible candidate.
pub fn enumerate_active_sets(p: &QpProblem) -> Option<(Vec<f64>, f64)> {
    let n = p.dim();
    let k = p.b_eq.len();
    let m = p.h.len();
    assert!(m <= 16, "too many inequalities to enumerate");
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let size = n + k + active.len();
        let mut kkt = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for i in 0..n {
            kkt[(i, i)] = p.q[i];
            rhs[i] = -p.c[i];
        }
        for r in 0..k {
            for j in 0..n {
                kkt[(n + r, j)] = p.a_eq[(r, j)];
                kkt[(j, n + r)] = p.a_eq[(r, j)];
            }
            rhs[n + r] = p.b_eq[r];
        }
        for (r, &a) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + k + r, j)] = p.g[(a, j)];
                kkt[(j, n + k + r)] = p.g[(a, j)];
            }
            rhs[n + k + r] = p.h[a];
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        let dual_ok = (0..active.len()).all(|r| sol[n + k + r] >= -1e-9);
        let primal_ok = (0..m).all(|i| (0..n).map(|j| p.g[(i, j)] * x[j]).sum::<f64>() <= p.h[i] + 1e-9);
        if dual_ok && primal_ok {
            let f = p.objective(&x);
            if best.as_ref().is_none_or(|(_, b)| f < *b) {
                best = Some((x, f));
            }
        }
    }
    best
}
