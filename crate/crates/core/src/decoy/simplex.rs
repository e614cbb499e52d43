//! Dense bounded-variable primal simplex.
//!
//! Solves `max c·x` subject to `lo_i ≤ a_i·x ≤ hi_i` and `l_j ≤ x_j ≤ u_j`.
//! Every row gets a bounded slack `r_i = a_i·x`, so the working system is
//! `A x − r = 0`. Phase one drives artificial columns to zero; both phases
//! choose entering and leaving columns by Bland's rule, which rules out cycling.

use std::fmt;

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-14;
const FEAS_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    /// Rows whose artificial variable could not be driven to zero.
    Infeasible { rows: Vec<usize> },
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Infeasible { rows } => write!(f, "infeasible (rows {rows:?})"),
            LpError::Unbounded => write!(f, "unbounded"),
            LpError::IterationLimit => write!(f, "iteration limit reached"),
        }
    }
}

impl std::error::Error for LpError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    var_bounds: Vec<(f64, f64)>,
    rows: Vec<Vec<f64>>,
    row_bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

impl LinearProgram {
    /// `n` variables, each bounded to `[0, ∞)`, zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            var_bounds: vec![(0.0, f64::INFINITY); n],
            rows: Vec::new(),
            row_bounds: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// # Panics
    /// If `lo` is not finite or `lo > hi`.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        assert!(lo.is_finite() && lo <= hi, "bad bounds [{lo}, {hi}]");
        self.var_bounds[j] = (lo, hi);
    }

    pub fn set_objective(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.num_vars());
        self.objective.copy_from_slice(c);
    }

    /// Adds `lo ≤ coeffs·x ≤ hi`; returns the row index.
    pub fn add_row(&mut self, coeffs: &[f64], lo: f64, hi: f64) -> usize {
        assert_eq!(coeffs.len(), self.num_vars());
        assert!(lo <= hi && (lo.is_finite() || hi.is_finite()), "bad row bounds [{lo}, {hi}]");
        self.rows.push(coeffs.to_vec());
        self.row_bounds.push((lo, hi));
        self.rows.len() - 1
    }

    pub fn maximize(&self) -> Result<Solution, LpError> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    m: usize,
    n: usize,
    /// `B^-1 [A | -I | diag(sigma)]`, row-major with `n + 2m` columns.
    t: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let cols = n + 2 * m;
        let mut lo = Vec::with_capacity(cols);
        let mut hi = Vec::with_capacity(cols);
        let mut x = Vec::with_capacity(cols);
        let mut status = Vec::with_capacity(cols);
        for &(l, h) in &lp.var_bounds {
            lo.push(l);
            hi.push(h);
            x.push(l);
            status.push(Status::Lower);
        }
        // nonbasic slacks sit on a finite bound, the one nearer to A x0
        let mut residual = Vec::with_capacity(m);
        for (row, &(l, h)) in lp.rows.iter().zip(&lp.row_bounds) {
            let ax: f64 = row.iter().zip(&lp.var_bounds).map(|(a, b)| a * b.0).sum();
            let at_upper = !l.is_finite() || (h.is_finite() && (ax - h).abs() < (ax - l).abs());
            let r0 = if at_upper { h } else { l };
            lo.push(l);
            hi.push(h);
            x.push(r0);
            status.push(if at_upper { Status::Upper } else { Status::Lower });
            residual.push(r0);
        }
        let mut t = vec![vec![0.0; cols]; m];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let ax: f64 = lp.rows[i].iter().zip(&x[..n]).map(|(a, b)| a * b).sum();
            // A x - r + sigma a = 0  =>  sigma a = r - A x
            let gap = residual[i] - ax;
            let sigma = if gap < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[i][j] = lp.rows[i][j] / sigma;
            }
            t[i][n + i] = -1.0 / sigma;
            t[i][n + m + i] = 1.0;
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(gap.abs());
            status.push(Status::Basic);
            basis.push(n + m + i);
        }
        Self {
            m,
            n,
            t,
            lo,
            hi,
            x,
            status,
            basis,
            iterations: 0,
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<Solution, LpError> {
        let cols = self.n + 2 * self.m;
        let mut phase1 = vec![0.0; cols];
        for c in phase1.iter_mut().skip(self.n + self.m) {
            *c = -1.0;
        }
        self.optimise(&phase1)?;
        let infeasible: Vec<usize> = (0..self.m)
            .filter(|&i| self.x[self.n + self.m + i] > FEAS_TOL)
            .collect();
        if !infeasible.is_empty() {
            return Err(LpError::Infeasible { rows: infeasible });
        }
        for i in 0..self.m {
            let a = self.n + self.m + i;
            self.hi[a] = 0.0;
            if self.status[a] != Status::Basic {
                self.x[a] = 0.0;
                self.status[a] = Status::Lower;
            }
        }
        let mut phase2 = vec![0.0; cols];
        phase2[..self.n].copy_from_slice(&lp.objective);
        self.optimise(&phase2)?;
        let x: Vec<f64> = (0..self.n)
            .map(|j| self.x[j].clamp(self.lo[j], self.hi[j]))
            .collect();
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(Solution {
            objective,
            x,
            iterations: self.iterations,
        })
    }

    fn optimise(&mut self, c: &[f64]) -> Result<(), LpError> {
        let cols = c.len();
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit);
            }
            // entering column: lowest index with an improving reduced cost
            let mut entering = None;
            for j in 0..cols {
                if self.status[j] == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = c[j] - (0..self.m).map(|i| c[self.basis[i]] * self.t[i][j]).sum::<f64>();
                if self.status[j] == Status::Lower && d > COST_TOL {
                    entering = Some((j, 1.0));
                    break;
                }
                if self.status[j] == Status::Upper && d < -COST_TOL {
                    entering = Some((j, -1.0));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            self.iterations += 1;

            let mut step = self.hi[j] - self.lo[j];
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let g = -dir * self.t[i][j];
                let b = self.basis[i];
                let (limit, bound) = if g < -PIVOT_TOL {
                    (((self.x[b] - self.lo[b]) / -g).max(0.0), self.lo[b])
                } else if g > PIVOT_TOL && self.hi[b].is_finite() {
                    (((self.hi[b] - self.x[b]) / g).max(0.0), self.hi[b])
                } else {
                    continue;
                };
                let better = match leaving {
                    _ if limit < step => true,
                    Some((r, _)) => limit == step && b < self.basis[r],
                    None => false,
                };
                if better {
                    step = limit;
                    leaving = Some((i, bound));
                }
            }
            if !step.is_finite() {
                return Err(LpError::Unbounded);
            }
            match leaving {
                None => {
                    // bound flip
                    let (to, st) = if dir > 0.0 {
                        (self.hi[j], Status::Upper)
                    } else {
                        (self.lo[j], Status::Lower)
                    };
                    self.x[j] = to;
                    self.status[j] = st;
                }
                Some((r, bound)) => {
                    let out = self.basis[r];
                    self.x[j] += dir * step;
                    self.pivot(r, j);
                    self.x[out] = bound;
                    self.status[out] = if bound == self.hi[out] && bound != self.lo[out] {
                        Status::Upper
                    } else {
                        Status::Lower
                    };
                }
            }
            self.refresh_basic();
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i][j];
            if f != 0.0 {
                for (v, pv) in self.t[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.status[self.basis[r]] = Status::Lower;
        self.basis[r] = j;
        self.status[j] = Status::Basic;
    }

    /// `x_B = -T_N x_N`.
    fn refresh_basic(&mut self) {
        for i in 0..self.m {
            let mut v = 0.0;
            for (k, tk) in self.t[i].iter().enumerate() {
                if self.status[k] != Status::Basic && self.x[k] != 0.0 {
                    v -= tk * self.x[k];
                }
            }
            let b = self.basis[i];
            self.x[b] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_objective(&[3.0, 5.0]);
        lp.add_row(&[1.0, 0.0], f64::NEG_INFINITY, 4.0);
        lp.add_row(&[0.0, 2.0], f64::NEG_INFINITY, 12.0);
        lp.add_row(&[3.0, 2.0], f64::NEG_INFINITY, 18.0);
        let s = lp.maximize().unwrap();
        assert_relative_eq!(s.objective, 36.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn box_bounds_only() {
        let mut lp = LinearProgram::new(3);
        for j in 0..3 {
            lp.set_bounds(j, 0.0, 1.0);
        }
        lp.set_objective(&[1.0, -1.0, 2.0]);
        let s = lp.maximize().unwrap();
        assert_eq!(s.x, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn equality_rows() {
        // x + y + z = 1, x - y = 0.2; max z - x
        let mut lp = LinearProgram::new(3);
        lp.set_objective(&[-1.0, 0.0, 1.0]);
        lp.add_row(&[1.0, 1.0, 1.0], 1.0, 1.0);
        lp.add_row(&[1.0, -1.0, 0.0], 0.2, 0.2);
        let s = lp.maximize().unwrap();
        assert_relative_eq!(s.x[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(s.x[2], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_row_reported() {
        let mut lp = LinearProgram::new(2);
        lp.set_bounds(0, 0.0, 1.0);
        lp.set_bounds(1, 0.0, 1.0);
        lp.add_row(&[1.0, 0.0], 0.0, 0.5);
        lp.add_row(&[1.0, 1.0], 3.0, 4.0);
        match lp.maximize() {
            Err(LpError::Infeasible { rows }) => assert_eq!(rows, vec![1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(&[1.0, 1.0]);
        lp.add_row(&[1.0, -1.0], f64::NEG_INFINITY, 1.0);
        assert_eq!(lp.maximize(), Err(LpError::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example under the largest-coefficient rule
        let mut lp = LinearProgram::new(4);
        lp.set_objective(&[0.75, -150.0, 0.02, -6.0]);
        lp.add_row(&[0.25, -60.0, -0.04, 9.0], f64::NEG_INFINITY, 0.0);
        lp.add_row(&[0.5, -90.0, -0.02, 3.0], f64::NEG_INFINITY, 0.0);
        lp.add_row(&[0.0, 0.0, 1.0, 0.0], f64::NEG_INFINITY, 1.0);
        let s = lp.maximize().unwrap();
        assert_relative_eq!(s.objective, 0.05, epsilon = 1e-9);
    }

    fn brute_force_2d(c: [f64; 2], rows: &[([f64; 2], f64)]) -> f64 {
        // vertices of {0 <= x, y <= 1, a.x <= b}
        let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
        lines.extend([([1.0, 0.0], 0.0), ([1.0, 0.0], 1.0), ([0.0, 1.0], 0.0), ([0.0, 1.0], 1.0)]);
        let feasible = |p: [f64; 2]| {
            (0.0..=1.0 + 1e-9).contains(&p[0])
                && (-1e-9..=1.0 + 1e-9).contains(&p[1])
                && p[0] >= -1e-9
                && rows.iter().all(|(a, b)| a[0] * p[0] + a[1] * p[1] <= b + 1e-9)
        };
        let mut best = f64::NEG_INFINITY;
        for i in 0..lines.len() {
            for k in i + 1..lines.len() {
                let (a, b) = lines[i];
                let (d, e) = lines[k];
                let det = a[0] * d[1] - a[1] * d[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let p = [(b * d[1] - a[1] * e) / det, (a[0] * e - b * d[0]) / det];
                if feasible(p) {
                    best = best.max(c[0] * p[0] + c[1] * p[1]);
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            c in prop::array::uniform2(-2.0f64..2.0),
            rows in prop::collection::vec((prop::array::uniform2(-2.0f64..2.0), 0.0f64..2.0), 0..4),
        ) {
            let mut lp = LinearProgram::new(2);
            lp.set_bounds(0, 0.0, 1.0);
            lp.set_bounds(1, 0.0, 1.0);
            lp.set_objective(&c);
            for (a, b) in &rows {
                lp.add_row(a, f64::NEG_INFINITY, *b);
            }
            // origin is always feasible since b >= 0
            let s = lp.maximize().unwrap();
            let expect = brute_force_2d(c, &rows);
            prop_assert!((s.objective - expect).abs() < 1e-7, "{} vs {}", s.objective, expect);
        }
    }
}
