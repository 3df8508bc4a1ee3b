//! Dense two-phase primal simplex for `min c·x  s.t.  Ax = b, x >= 0`.
//!
//! Sized for occupancy-measure programs with a few hundred columns and a
//! handful of rows. Redundant equality rows are removed up front, Dantzig
//! pricing is used until a run of degenerate pivots, then Bland's rule.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const PIVOT_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    /// Empty unless `status` is optimal.
    pub x: Vec<f64>,
    pub value: f64,
    pub status: LpStatus,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>, a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.cols() != c.len() || a.rows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, c has {} entries, b has {}",
                a.rows(),
                a.cols(),
                c.len(),
                b.len()
            )));
        }
        let finite = c.iter().chain(&b).all(|v| v.is_finite())
            && (0..a.rows()).all(|i| a.row(i).iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter("LP data must be finite".into()));
        }
        Ok(Self { c, a, b })
    }
}

/// Solves the program. Infeasible and unbounded programs are reported through
/// [`LpSolution::status`]; pivot-limit and verification failures are errors.
pub fn solve_lp(p: &LinearProgram) -> Result<LpSolution> {
    let n = p.c.len();
    let mut rows: Vec<Vec<f64>> = (0..p.a.rows())
        .map(|i| {
            let mut r = p.a.row(i).to_vec();
            r.push(p.b[i]);
            if p.b[i] < 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
            }
            r
        })
        .collect();
    match independent_rows(&rows, n) {
        Some(keep) => rows = keep.into_iter().map(|i| rows[i].clone()).collect(),
        None => return Ok(infeasible()),
    }
    let m = rows.len();
    if m == 0 {
        // Only x >= 0 remains.
        if p.c.iter().any(|&ci| ci < 0.0) {
            return Ok(unbounded());
        }
        return Ok(LpSolution {
            x: vec![0.0; n],
            value: 0.0,
            status: LpStatus::Optimal,
        });
    }

    let mut t = Tableau::new(rows, n);
    let limit = 50 * (m + n) + 1000;

    // Phase 1: minimize the sum of artificials.
    let phase1: Vec<f64> = (0..n + m).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    t.set_objective(&phase1);
    match t.optimize(n + m, limit)? {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Err(Error::LpNumerical("phase 1 reported unbounded".into())),
    }
    let scale = 1.0 + t.rhs_scale();
    if t.objective_value() > FEAS_TOL * scale {
        return Ok(infeasible());
    }
    t.drive_out_artificials(n);

    // Phase 2 over the structural columns only.
    let mut cost = p.c.clone();
    cost.extend(std::iter::repeat(0.0).take(m));
    t.set_objective(&cost);
    match t.optimize(n, limit)? {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Ok(unbounded()),
    }

    let mut x = vec![0.0; n];
    for (i, &bi) in t.basis.iter().enumerate() {
        if bi < n {
            x[bi] = t.rhs(i);
        }
    }
    if let Some(&v) = x.iter().find(|&&v| v < -1e-10) {
        return Err(Error::LpNumerical(format!("basic variable {v} is negative")));
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let ax = p.a.mul_vec(&x);
    let worst = ax
        .iter()
        .zip(&p.b)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0, f64::max);
    if worst > FEAS_TOL * (1.0 + p.b.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
        return Err(Error::LpNumerical(format!("equality residual {worst:e}")));
    }
    let value = p.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution {
        x,
        value,
        status: LpStatus::Optimal,
    })
}

fn infeasible() -> LpSolution {
    LpSolution {
        x: Vec::new(),
        value: f64::INFINITY,
        status: LpStatus::Infeasible,
    }
}

fn unbounded() -> LpSolution {
    LpSolution {
        x: Vec::new(),
        value: f64::NEG_INFINITY,
        status: LpStatus::Unbounded,
    }
}

/// Indices of a maximal linearly independent subset of `[A | b]` rows, or
/// `None` if some dependent row has an inconsistent right-hand side.
fn independent_rows(rows: &[Vec<f64>], n: usize) -> Option<Vec<usize>> {
    let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut keep = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut r = row.clone();
        for (pc, kr) in &kept {
            let factor = r[*pc] / kr[*pc];
            if factor != 0.0 {
                r.iter_mut().zip(kr).for_each(|(x, k)| *x -= factor * k);
            }
        }
        let (pc, mag) = r[..n]
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bj, bm), (j, &v)| if v.abs() > bm { (j, v.abs()) } else { (bj, bm) });
        if mag <= RANK_TOL * scale {
            if r[n].abs() > FEAS_TOL * scale {
                return None;
            }
            continue;
        }
        kept.push((pc, r));
        keep.push(i);
    }
    Some(keep)
}

enum Outcome {
    Optimal,
    Unbounded,
}

/// Row-major tableau `[A | I | b]` with reduced-cost row.
struct Tableau {
    rows: Vec<Vec<f64>>,
    width: usize,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    obj: f64,
}

impl Tableau {
    fn new(constraints: Vec<Vec<f64>>, n: usize) -> Self {
        let m = constraints.len();
        let width = n + m;
        let rows = constraints
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = Vec::with_capacity(width + 1);
                row.extend_from_slice(&r[..n]);
                row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
                row.push(r[n]);
                row
            })
            .collect();
        Self {
            rows,
            width,
            basis: (n..n + m).collect(),
            reduced: vec![0.0; width],
            obj: 0.0,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn rhs_scale(&self) -> f64 {
        (0..self.rows.len()).map(|i| self.rhs(i).abs()).fold(0.0, f64::max)
    }

    fn objective_value(&self) -> f64 {
        self.obj
    }

    /// Prices out the basis for the given cost vector.
    fn set_objective(&mut self, cost: &[f64]) {
        self.reduced = cost.to_vec();
        self.obj = 0.0;
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                let row = &self.rows[i];
                for j in 0..self.width {
                    self.reduced[j] -= cb * row[j];
                }
                self.obj += cb * row[self.width];
            }
        }
    }

    /// Runs simplex pivots with entering columns restricted to `0..allowed`.
    fn optimize(&mut self, allowed: usize, limit: usize) -> Result<Outcome> {
        let mut degenerate = 0;
        for _ in 0..limit {
            let bland = degenerate >= DEGENERATE_RUN;
            let entering = if bland {
                (0..allowed).find(|&j| self.reduced[j] < -PIVOT_TOL)
            } else {
                let (j, v) = (0..allowed)
                    .map(|j| (j, self.reduced[j]))
                    .fold((usize::MAX, -PIVOT_TOL), |best, cur| if cur.1 < best.1 { cur } else { best });
                (j != usize::MAX && v < -PIVOT_TOL).then_some(j)
            };
            let Some(e) = entering else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[e];
                if a > PIVOT_TOL {
                    let ratio = row[self.width] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((l, ratio)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(l, e);
        }
        Err(Error::LpCycling(limit))
    }

    fn pivot(&mut self, l: usize, e: usize) {
        let w = self.width;
        let p = self.rows[l][e];
        self.rows[l].iter_mut().for_each(|v| *v /= p);
        let prow = self.rows[l].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == l {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                row.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
                row[e] = 0.0;
            }
        }
        let f = self.reduced[e];
        if f != 0.0 {
            for j in 0..w {
                self.reduced[j] -= f * prow[j];
            }
            self.reduced[e] = 0.0;
            self.obj += f * prow[w];
        }
        self.basis[l] = e;
    }

    /// Pivots zero-level artificials out of the basis where possible and drops
    /// rows that turn out to be redundant.
    fn drive_out_artificials(&mut self, n: usize) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= n {
                let col = (0..n)
                    .filter(|&j| self.rows[i][j].abs() > 1e-9)
                    .max_by(|&a, &b| self.rows[i][a].abs().total_cmp(&self.rows[i][b].abs()));
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.rows.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> LinearProgram {
        LinearProgram::new(c, Matrix::from_rows(&a).unwrap(), b).unwrap()
    }

    #[test]
    fn small_optimal() {
        let s = solve_lp(&lp(vec![1.0, 0.0], vec![vec![1.0, 1.0]], vec![1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.value, 0.0);
        assert_eq!(s.x, vec![0.0, 1.0]);
    }

    #[test]
    fn unbounded_program() {
        let s = solve_lp(&lp(vec![-1.0, 0.0], vec![vec![1.0, -1.0]], vec![0.0])).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_program() {
        let s = solve_lp(&lp(vec![1.0, 1.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 2.0])).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        let s = solve_lp(&lp(vec![1.0], vec![vec![1.0]], vec![-1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn redundant_rows_tolerated() {
        // x1 + x2 = 1 stated twice, plus 2x1 + 2x2 = 2.
        let s = solve_lp(&lp(
            vec![2.0, 3.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![1.0, 1.0, 2.0],
        ))
        .unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_program() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36.
        let s = solve_lp(&lp(
            vec![-3.0, -5.0, 0.0, 0.0, 0.0],
            vec![
                vec![1.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0, 1.0, 0.0],
                vec![3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            vec![4.0, 12.0, 18.0],
        ))
        .unwrap();
        assert!((s.value + 36.0).abs() < 1e-10);
        assert!((s.x[0] - 2.0).abs() < 1e-10 && (s.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn dimension_errors() {
        assert!(LinearProgram::new(vec![1.0], Matrix::zeros(1, 2), vec![1.0]).is_err());
        assert!(LinearProgram::new(vec![f64::NAN], Matrix::zeros(1, 1), vec![1.0]).is_err());
    }
}
