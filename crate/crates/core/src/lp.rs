//! Dense two-phase tableau simplex for
//!
//! ```text
//! maximize cᵀx  subject to  Ax ≤ b,  x ≥ 0
//! ```
//!
//! Rows with `b_i < 0` are negated into `≥` rows and receive an artificial
//! variable; phase one drives the artificials to zero, phase two optimises
//! the real objective.
//!
//! Pricing picks the most negative reduced cost. After
//! [`SimplexOptions::degenerate_switch`] consecutive pivots that leave the
//! objective unchanged, pricing switches to Bland's smallest-index rule until
//! the objective moves again; Bland's rule cannot cycle on a fixed objective
//! level, so the method terminates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    /// Objective coefficients `c`, length `k`.
    pub objective: Vec<f64>,
    /// Constraint matrix `A`, `m x k`.
    pub constraints: Matrix,
    /// Right-hand side `b`, length `m`.
    pub rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    /// Entries with magnitude at or below this are never pivoted on, and
    /// reduced costs above `-pivot_tolerance` count as optimal.
    pub pivot_tolerance: f64,
    /// Phase-one objective below `-feasibility_tolerance` means infeasible.
    pub feasibility_tolerance: f64,
    pub max_pivots: usize,
    /// Consecutive degenerate pivots tolerated before falling back to
    /// Bland's rule. Zero means Bland's rule throughout.
    pub degenerate_switch: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_tolerance: 1e-10,
            feasibility_tolerance: 1e-9,
            max_pivots: 1_000_000,
            degenerate_switch: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub outcome: LpOutcome,
    pub pivots: usize,
}

struct Tableau {
    /// `(m + 1) x (cols + 1)`; the last row is the objective row written as
    /// `z - cᵀx = 0`, the last column is the right-hand side.
    cells: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.at(row, col);
        for x in &mut self.cells[row * w..(row + 1) * w] {
            *x /= p;
        }
        let pivot_row: Vec<f64> = self.cells[row * w..(row + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&c| pivot_row[c] != 0.0).collect();
        for r in 0..=self.m {
            if r == row {
                continue;
            }
            let f = self.cells[r * w + col];
            if f == 0.0 {
                continue;
            }
            let target = &mut self.cells[r * w..(r + 1) * w];
            for &c in &nz {
                target[c] -= f * pivot_row[c];
            }
            target[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Optimises over columns `0..allowed`. Returns `false` if the
    /// objective is unbounded.
    fn optimise(&mut self, allowed: usize, opts: &SimplexOptions) -> Result<bool> {
        let obj = self.m;
        let mut stalled = 0usize;
        loop {
            let bland = stalled >= opts.degenerate_switch;
            let col = if bland {
                (0..allowed).find(|&c| self.at(obj, c) < -opts.pivot_tolerance)
            } else {
                (0..allowed)
                    .filter(|&c| self.at(obj, c) < -opts.pivot_tolerance)
                    .min_by(|&a, &b| self.at(obj, a).total_cmp(&self.at(obj, b)))
            };
            let Some(col) = col else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, col);
                if a <= opts.pivot_tolerance {
                    continue;
                }
                let ratio = self.rhs(r) / a;
                best = match best {
                    Some((br, bratio))
                        if bratio < ratio
                            || (bratio == ratio && self.basis[br] < self.basis[r]) =>
                    {
                        Some((br, bratio))
                    }
                    _ => Some((r, ratio)),
                };
            }
            let Some((row, _)) = best else {
                return Ok(false);
            };
            if self.pivots >= opts.max_pivots {
                return Err(Error::PivotLimit(opts.max_pivots));
            }
            let before = self.rhs(obj);
            self.pivot(row, col);
            if self.rhs(obj) == before {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
    }
}

pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    let m = lp.constraints.rows();
    let k = lp.constraints.cols();
    if lp.objective.len() != k || lp.rhs.len() != m {
        return Err(Error::Shape(format!(
            "objective {} / rhs {} for a {m}x{k} constraint matrix",
            lp.objective.len(),
            lp.rhs.len()
        )));
    }
    if !lp.constraints.is_finite()
        || lp.objective.iter().chain(&lp.rhs).any(|x| !x.is_finite())
    {
        return Err(Error::InvalidArgument("linear program is not finite".into()));
    }

    let flipped: Vec<bool> = lp.rhs.iter().map(|&b| b < 0.0).collect();
    let artificial_count = flipped.iter().filter(|&&f| f).count();
    let slack0 = k;
    let art0 = k + m;
    let width = k + m + artificial_count + 1;
    let mut t = Tableau {
        cells: vec![0.0; (m + 1) * width],
        width,
        m,
        basis: vec![0; m],
        pivots: 0,
    };

    let mut next_art = art0;
    for r in 0..m {
        let sign = if flipped[r] { -1.0 } else { 1.0 };
        let row = &mut t.cells[r * width..(r + 1) * width];
        for (c, a) in lp.constraints.row(r).iter().enumerate() {
            row[c] = sign * a;
        }
        row[slack0 + r] = sign;
        row[width - 1] = sign * lp.rhs[r];
        if flipped[r] {
            row[next_art] = 1.0;
            t.basis[r] = next_art;
            next_art += 1;
        } else {
            t.basis[r] = slack0 + r;
        }
    }

    if artificial_count > 0 {
        // maximise -Σ artificials
        for c in art0..width - 1 {
            t.cells[m * width + c] = 1.0;
        }
        for r in (0..m).filter(|&r| flipped[r]) {
            for c in 0..width {
                t.cells[m * width + c] -= t.cells[r * width + c];
            }
        }
        t.optimise(width - 1, opts)?;
        if t.rhs(m) < -opts.feasibility_tolerance {
            return Ok(LpSolution {
                outcome: LpOutcome::Infeasible,
                pivots: t.pivots,
            });
        }
        for r in 0..m {
            if t.basis[r] >= art0 {
                if let Some(c) = (0..art0).find(|&c| t.at(r, c).abs() > opts.pivot_tolerance) {
                    t.pivot(r, c);
                }
                // otherwise the row is redundant and its artificial stays at zero
            }
        }
    }

    for c in 0..width {
        t.cells[m * width + c] = if c < k { -lp.objective[c] } else { 0.0 };
    }
    for r in 0..m {
        let col = t.basis[r];
        let f = t.cells[m * width + col];
        if f != 0.0 {
            for c in 0..width {
                t.cells[m * width + c] -= f * t.cells[r * width + c];
            }
        }
    }
    if !t.optimise(art0, opts)? {
        return Ok(LpSolution {
            outcome: LpOutcome::Unbounded,
            pivots: t.pivots,
        });
    }

    let mut x = vec![0.0; k];
    for r in 0..m {
        if t.basis[r] < k {
            x[t.basis[r]] = t.rhs(r);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        outcome: LpOutcome::Optimal { x, objective },
        pivots: t.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        LinearProgram {
            objective: c.to_vec(),
            constraints: Matrix::from_rows(a).unwrap(),
            rhs: b.to_vec(),
        }
    }

    fn optimum(sol: &LpSolution) -> (Vec<f64>, f64) {
        match &sol.outcome {
            LpOutcome::Optimal { x, objective } => (x.clone(), *objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let p = lp(&[3.0, 5.0], &[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 2.0]], &[4.0, 12.0, 18.0]);
        let (x, z) = optimum(&solve(&p, &SimplexOptions::default()).unwrap());
        assert!((z - 36.0).abs() < 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn phase_one_with_lower_bounds() {
        // max -x - y, x + y ≥ 2 (as -x - y ≤ -2), x ≤ 3 → objective -2
        let p = lp(&[-1.0, -1.0], &[&[-1.0, -1.0], &[1.0, 0.0]], &[-2.0, 3.0]);
        let (x, z) = optimum(&solve(&p, &SimplexOptions::default()).unwrap());
        assert!((z + 2.0).abs() < 1e-12);
        assert!((x[0] + x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible() {
        // x ≤ 1 and x ≥ 2
        let p = lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, -2.0]);
        assert_eq!(
            solve(&p, &SimplexOptions::default()).unwrap().outcome,
            LpOutcome::Infeasible
        );
    }

    #[test]
    fn detects_unbounded() {
        // max x, -x + y ≤ 1
        let p = lp(&[1.0, 0.0], &[&[-1.0, 1.0]], &[1.0]);
        assert_eq!(
            solve(&p, &SimplexOptions::default()).unwrap().outcome,
            LpOutcome::Unbounded
        );
    }

    #[test]
    fn redundant_equality_pair() {
        // x + y = 1 written twice as two inequalities each, max x
        let p = lp(
            &[1.0, 0.0],
            &[&[1.0, 1.0], &[-1.0, -1.0], &[1.0, 1.0], &[-1.0, -1.0]],
            &[1.0, -1.0, 1.0, -1.0],
        );
        let (x, z) = optimum(&solve(&p, &SimplexOptions::default()).unwrap());
        assert!((z - 1.0).abs() < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, cycles under the textbook largest-coefficient rule
        let p = lp(
            &[0.75, -150.0, 0.02, -6.0],
            &[
                &[0.25, -60.0, -0.04, 9.0],
                &[0.5, -90.0, -0.02, 3.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[0.0, 0.0, 1.0],
        );
        for switch in [0, 1, 50] {
            let opts = SimplexOptions {
                degenerate_switch: switch,
                ..SimplexOptions::default()
            };
            let (_, z) = optimum(&solve(&p, &opts).unwrap());
            assert!((z - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let mut p = lp(&[1.0], &[&[1.0]], &[1.0]);
        p.rhs.push(2.0);
        assert!(solve(&p, &SimplexOptions::default()).is_err());
    }
}
