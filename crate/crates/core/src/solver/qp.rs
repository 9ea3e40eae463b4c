//! Dense convex quadratic programs with a diagonal Hessian.
//!
//! ```text
//! minimize    ½·xᵀ·diag(q)·x + cᵀx
//! subject to  A·x = b,  G·x ≤ h
//! ```
//!
//! Solved by a Mehrotra predictor–corrector interior-point method, followed by
//! an active-set polish that recovers the vertex solution to machine
//! precision. Infeasibility is certified by a phase-one program.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 120;
const TOLERANCE: f64 = 1e-11;
const FEASIBILITY: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub g: DMatrix<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_equality: f64,
    pub primal_inequality: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.primal_equality,
            self.primal_inequality,
            self.dual_feasibility,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the equality rows.
    pub y: Vec<f64>,
    /// Multipliers of the inequality rows, nonnegative.
    pub z: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
}

impl QpSolution {
    /// Inequality rows with a positive multiplier.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.z[i] > 0.0).collect()
    }
}

impl QpProblem {
    pub fn new(q: Vec<f64>, c: Vec<f64>) -> Self {
        let n = q.len();
        QpProblem {
            q,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: vec![],
            g: DMatrix::zeros(0, n),
            h: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn push_equality(&mut self, row: &[f64], rhs: f64) {
        self.a_eq = append_row(&self.a_eq, row);
        self.b_eq.push(rhs);
    }

    pub fn push_inequality(&mut self, row: &[f64], rhs: f64) {
        self.g = append_row(&self.g, row);
        self.h.push(rhs);
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.q)
            .zip(&self.c)
            .map(|((x, q), c)| 0.5 * q * x * x + c * x)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        let ok = self.c.len() == n
            && self.a_eq.ncols() == n
            && self.g.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.g.nrows() == self.h.len();
        if !ok {
            return Err(Error::InvalidArgument("inconsistent QP dimensions".into()));
        }
        if self.q.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
            return Err(Error::InvalidArgument("quadratic cost must be nonnegative".into()));
        }
        Ok(())
    }
}

fn append_row(m: &DMatrix<f64>, row: &[f64]) -> DMatrix<f64> {
    let r = m.nrows();
    let mut out = m.clone().insert_row(r, 0.0);
    out.row_mut(r).copy_from_slice(row);
    out
}

pub fn kkt_residuals(p: &QpProblem, x: &[f64], y: &[f64], z: &[f64]) -> KktResiduals {
    let xv = DVector::from_column_slice(x);
    let grad = DVector::from_iterator(p.dim(), x.iter().zip(&p.q).zip(&p.c).map(|((x, q), c)| q * x + c))
        + p.a_eq.tr_mul(&DVector::from_column_slice(y))
        + p.g.tr_mul(&DVector::from_column_slice(z));
    let eq = &p.a_eq * &xv - DVector::from_column_slice(&p.b_eq);
    let slack = DVector::from_column_slice(&p.h) - &p.g * &xv;
    KktResiduals {
        stationarity: grad.amax(),
        primal_equality: eq.amax(),
        primal_inequality: slack.iter().fold(0.0, |m, s| m.max(-s)),
        dual_feasibility: z.iter().fold(0.0, |m, z| m.max(-z)),
        complementarity: slack.iter().zip(z).fold(0.0, |m, (s, z)| m.max((s * z).abs())),
    }
}

fn finish(p: &QpProblem, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, status: QpStatus, iterations: usize) -> QpSolution {
    let residuals = kkt_residuals(p, &x, &y, &z);
    QpSolution { objective: p.objective(&x), x, y, z, status, iterations, residuals }
}

/// Solve with no prior information.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    solve_qp_warm(p, None)
}

/// Solve, first trying `hint` as the active set. A guess that satisfies every
/// optimality condition is accepted without running the interior-point method.
pub fn solve_qp_warm(p: &QpProblem, hint: Option<&[usize]>) -> Result<QpSolution> {
    p.validate()?;
    if let Some(active) = hint {
        if let Some((x, y, z)) = polish(p, active) {
            return Ok(finish(p, x, y, z, QpStatus::Optimal, 0));
        }
    }
    match interior_point(p)? {
        Some(ip) => {
            let active: Vec<usize> = (0..ip.z.len()).filter(|&i| ip.z[i] > ip.s[i]).collect();
            if let Some((x, y, z)) = polish(p, &active) {
                return Ok(finish(p, x, y, z, QpStatus::Optimal, ip.iterations));
            }
            let z = ip.z.iter().map(|z| z.max(0.0)).collect();
            let sol = finish(p, ip.x, ip.y, z, QpStatus::Optimal, ip.iterations);
            if sol.residuals.max() > 1e-6 * (1.0 + scale(p)) {
                return Err(Error::Numerical(format!("KKT residual {:.3e} after interior point", sol.residuals.max())));
            }
            Ok(sol)
        }
        None => {
            let n = p.dim();
            let status = if phase_one_infeasible(p)? { QpStatus::Infeasible } else { QpStatus::IterationLimit };
            Ok(finish(p, vec![0.0; n], vec![0.0; p.b_eq.len()], vec![0.0; p.h.len()], status, MAX_ITERATIONS))
        }
    }
}

fn scale(p: &QpProblem) -> f64 {
    p.c.iter().chain(&p.b_eq).chain(&p.h).fold(0.0, |m, v| m.max(v.abs()))
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    iterations: usize,
}

/// Solve the equality-constrained problem with `active` inequality rows held
/// tight; accept only if the result is primal and dual feasible.
fn polish(p: &QpProblem, active: &[usize]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = p.dim();
    let me = p.b_eq.len();
    let k = n + me + active.len();
    if me + active.len() > n {
        return None;
    }
    let mut kkt = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for i in 0..n {
        kkt[(i, i)] = p.q[i];
        rhs[i] = -p.c[i];
    }
    let rows = (0..me).map(|r| (p.a_eq.row(r), p.b_eq[r])).chain(active.iter().map(|&r| (p.g.row(r), p.h[r])));
    for (j, (row, b)) in rows.enumerate() {
        for i in 0..n {
            kkt[(n + j, i)] = row[i];
            kkt[(i, n + j)] = row[i];
        }
        rhs[n + j] = b;
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let y: Vec<f64> = sol.rows(n, me).iter().copied().collect();
    let mut z = vec![0.0; p.h.len()];
    let dual_scale = 1.0 + p.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (j, &r) in active.iter().enumerate() {
        let v = sol[n + me + j];
        if v < -1e-10 * dual_scale {
            return None;
        }
        z[r] = v.max(0.0);
    }
    let xv = DVector::from_column_slice(&x);
    let gx = &p.g * &xv;
    if gx.iter().zip(&p.h).any(|(g, h)| *g > h + FEASIBILITY * (1.0 + h.abs())) {
        return None;
    }
    let res = kkt_residuals(p, &x, &y, &z);
    if res.stationarity > 1e-9 * dual_scale || res.primal_equality > FEASIBILITY * (1.0 + scale(p)) {
        return None;
    }
    Some((x, y, z))
}

fn interior_point(p: &QpProblem) -> Result<Option<Iterate>> {
    let n = p.dim();
    let me = p.b_eq.len();
    let m = p.h.len();
    let g = &p.g;
    let a = &p.a_eq;
    let b = DVector::from_column_slice(&p.b_eq);
    let h = DVector::from_column_slice(&p.h);
    let c = DVector::from_column_slice(&p.c);
    let q = DVector::from_column_slice(&p.q);
    let reg = 1e-12;

    let kkt_with = |w: &DVector<f64>| -> DMatrix<f64> {
        let mut k = DMatrix::<f64>::zeros(n + me, n + me);
        let mut gw = g.clone();
        for (r, wr) in w.iter().enumerate() {
            gw.row_mut(r).scale_mut(*wr);
        }
        let hess = g.tr_mul(&gw);
        k.view_mut((0, 0), (n, n)).copy_from(&hess);
        for i in 0..n {
            k[(i, i)] += q[i] + reg;
        }
        k.view_mut((n, 0), (me, n)).copy_from(a);
        k.view_mut((0, n), (n, me)).copy_from(&a.transpose());
        for i in 0..me {
            k[(n + i, n + i)] = -reg;
        }
        k
    };

    // Starting point from the least-squares slack problem.
    let k0 = kkt_with(&DVector::from_element(m, 1.0));
    let mut rhs0 = DVector::<f64>::zeros(n + me);
    rhs0.rows_mut(0, n).copy_from(&(-&c + g.tr_mul(&h)));
    rhs0.rows_mut(n, me).copy_from(&b);
    let start = k0.lu().solve(&rhs0).ok_or_else(|| Error::Numerical("singular starting system".into()))?;
    let mut x = start.rows(0, n).into_owned();
    let mut y = start.rows(n, me).into_owned();
    let mut s = &h - g * &x;
    let shift = s.iter().fold(0.0f64, |acc, v| acc.max(-v));
    s.add_scalar_mut(shift + 1.0);
    let mut z = DVector::from_element(m, 1.0);

    let cnorm = 1.0 + c.amax();
    let bnorm = 1.0 + b.amax().max(h.amax());

    for it in 0..MAX_ITERATIONS {
        let r_d = q.component_mul(&x) + &c + a.tr_mul(&y) + g.tr_mul(&z);
        let r_p = a * &x - &b;
        let r_i = g * &x + &s - &h;
        let mu = if m > 0 { s.dot(&z) / m as f64 } else { 0.0 };
        let done = r_d.amax() <= TOLERANCE * cnorm
            && r_p.amax() <= TOLERANCE * bnorm
            && r_i.amax() <= TOLERANCE * bnorm
            && mu <= TOLERANCE * cnorm.max(bnorm);
        if done {
            return Ok(Some(Iterate {
                x: x.iter().copied().collect(),
                y: y.iter().copied().collect(),
                z: z.iter().copied().collect(),
                s: s.iter().copied().collect(),
                iterations: it,
            }));
        }
        if !(mu.is_finite() && x.amax() < 1e12 && z.amax() < 1e14) {
            return Ok(None);
        }

        let w = z.component_div(&s);
        let lu = kkt_with(&w).lu();
        let direction = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            let t = (z.component_mul(&r_i) - r_c).component_div(&s);
            let mut rhs = DVector::<f64>::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&(-&r_d - g.tr_mul(&t)));
            rhs.rows_mut(n, me).copy_from(&(-&r_p));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let gdx = g * &dx;
            let dz = (-r_c + z.component_mul(&(&r_i + &gdx))).component_div(&s);
            let ds = -&r_i - gdx;
            Some((dx, dy, dz, ds))
        };
        let step = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            v.iter().zip(dv.iter()).fold(1.0f64, |acc, (v, d)| if *d < 0.0 { acc.min(-v / d) } else { acc })
        };

        let r_aff = s.component_mul(&z);
        let Some((_, _, dz_a, ds_a)) = direction(&r_aff) else {
            return Ok(None);
        };
        let alpha_aff = step(&s, &ds_a).min(step(&z, &dz_a));
        let mu_aff = if m > 0 {
            (&s + alpha_aff * &ds_a).dot(&(&z + alpha_aff * &dz_a)) / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3) } else { 0.0 };
        let r_c = r_aff + ds_a.component_mul(&dz_a) - DVector::from_element(m, sigma * mu);
        let Some((dx, dy, dz, ds)) = direction(&r_c) else {
            return Ok(None);
        };
        let alpha = (0.99 * step(&s, &ds).min(step(&z, &dz))).min(1.0);
        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
    }
    Ok(None)
}

/// Whether `{A·x = b, G·x ≤ h}` is empty, by minimizing a uniform relaxation.
fn phase_one_infeasible(p: &QpProblem) -> Result<bool> {
    let n = p.dim();
    let mut q = vec![1e-8; n + 1];
    q[n] = 1e-8;
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut relaxed = QpProblem::new(q, c);
    for r in 0..p.b_eq.len() {
        let mut row: Vec<f64> = p.a_eq.row(r).iter().copied().collect();
        row.push(0.0);
        relaxed.push_equality(&row, p.b_eq[r]);
    }
    for r in 0..p.h.len() {
        let mut row: Vec<f64> = p.g.row(r).iter().copied().collect();
        row.push(-1.0);
        relaxed.push_inequality(&row, p.h[r]);
    }
    let mut bound = vec![0.0; n + 1];
    bound[n] = -1.0;
    relaxed.push_inequality(&bound, 0.0);
    match interior_point(&relaxed)? {
        Some(ip) => Ok(ip.x[n] > 1e-7 * (1.0 + scale(p))),
        None => Err(Error::Numerical("phase-one program did not converge".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_lower_bound() {
        let mut p = QpProblem::new(vec![2.0], vec![0.0]);
        p.push_inequality(&[-1.0], -1.0);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(s.residuals.max() < 1e-12);
    }

    #[test]
    fn symmetric_equality() {
        let mut p = QpProblem::new(vec![2.0, 2.0], vec![0.0, 0.0]);
        p.push_equality(&[1.0, 1.0], 2.0);
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_box() {
        let mut p = QpProblem::new(vec![1.0], vec![0.0]);
        p.push_inequality(&[1.0], 1.0);
        p.push_inequality(&[-1.0], -2.0);
        assert_eq!(solve_qp(&p).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn linear_program_vertex() {
        // maximize x + y on the unit simplex corner at (1, 0) with x weighted more.
        let mut p = QpProblem::new(vec![0.0, 0.0], vec![-2.0, -1.0]);
        p.push_inequality(&[1.0, 1.0], 1.0);
        p.push_inequality(&[-1.0, 0.0], 0.0);
        p.push_inequality(&[0.0, -1.0], 0.0);
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
        assert!(s.residuals.max() < 1e-10);
    }

    #[test]
    fn warm_start_accepts_correct_guess() {
        let mut p = QpProblem::new(vec![2.0], vec![0.0]);
        p.push_inequality(&[-1.0], -1.0);
        let s = solve_qp_warm(&p, Some(&[0])).unwrap();
        assert_eq!(s.iterations, 0);
        assert!((s.x[0] - 1.0).abs() < 1e-15);
        // A wrong guess falls back to the interior point.
        let mut p2 = p.clone();
        p2.h[0] = 1.0;
        let s2 = solve_qp_warm(&p2, Some(&[0])).unwrap();
        assert!(s2.x[0].abs() < 1e-12);
    }
}
