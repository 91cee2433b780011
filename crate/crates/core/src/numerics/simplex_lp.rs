//! A small dense two-phase simplex solver for equality-constrained linear
//! programs in standard form:
//!
//!   maximize  c'x   subject to  Ax = b,  x >= 0.
//!
//! Only used for tiny feasibility programs (eutaxy certificates), so the
//! implementation favors robustness (Bland's rule, explicit phase 1) over
//! speed.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-11;

/// Solve max c'x s.t. Ax = b, x >= 0 with a dense tableau.
pub fn solve_eq_lp(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> LpOutcome {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);

    // make b nonnegative
    let mut a = a.clone();
    let mut b = b.clone();
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for j in 0..n {
                a[(i, j)] = -a[(i, j)];
            }
        }
    }

    // phase 1: artificial variables
    let total = n + m;
    let mut tableau = DMatrix::<f64>::zeros(m + 1, total + 1);
    for i in 0..m {
        for j in 0..n {
            tableau[(i, j)] = a[(i, j)];
        }
        tableau[(i, n + i)] = 1.0;
        tableau[(i, total)] = b[i];
    }
    // phase-1 objective: minimize sum of artificials == maximize -sum
    let mut basis: Vec<usize> = (n..total).collect();
    for j in 0..total + 1 {
        let mut s = 0.0;
        for i in 0..m {
            if j < n || j == total {
                s += tableau[(i, j)];
            }
        }
        if j < n {
            tableau[(m, j)] = -s;
        } else if j == total {
            tableau[(m, total)] = -s;
        }
    }

    if !run_simplex(&mut tableau, &mut basis, total) {
        return LpOutcome::Unbounded; // cannot happen in phase 1
    }
    if tableau[(m, total)] < -1e-7 {
        return LpOutcome::Infeasible;
    }

    // drive artificial variables out of the basis where possible
    for i in 0..m {
        if basis[i] >= n {
            let mut pivot_col = None;
            for j in 0..n {
                if tableau[(i, j)].abs() > 1e-9 {
                    pivot_col = Some(j);
                    break;
                }
            }
            if let Some(j) = pivot_col {
                pivot(&mut tableau, i, j);
                basis[i] = j;
            }
        }
    }

    // phase 2: rebuild objective row for c, restricted to original columns
    for j in 0..total + 1 {
        tableau[(m, j)] = 0.0;
    }
    for j in 0..n {
        tableau[(m, j)] = -c[j];
    }
    // zero out artificial columns so they can never re-enter
    for i in 0..m {
        for j in n..total {
            tableau[(i, j)] = 0.0;
        }
    }
    // price out the basis
    for i in 0..m {
        let bj = basis[i];
        if bj < n {
            let factor = tableau[(m, bj)];
            if factor.abs() > 0.0 {
                for j in 0..total + 1 {
                    let t = tableau[(i, j)];
                    tableau[(m, j)] -= factor * t;
                }
            }
        }
    }

    if !run_simplex(&mut tableau, &mut basis, n) {
        return LpOutcome::Unbounded;
    }

    let mut x = DVector::zeros(n);
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = tableau[(i, total)];
        }
    }
    let objective = c.dot(&x);
    LpOutcome::Optimal { x, objective }
}

/// Bland-rule simplex on the tableau; pivots only among columns < ncols_used.
/// Returns false when unbounded.
fn run_simplex(tableau: &mut DMatrix<f64>, basis: &mut [usize], ncols_used: usize) -> bool {
    let m = tableau.nrows() - 1;
    let rhs = tableau.ncols() - 1;
    for _ in 0..20_000 {
        // entering: first column with negative reduced cost (Bland)
        let mut enter = None;
        for j in 0..ncols_used {
            if tableau[(m, j)] < -EPS {
                enter = Some(j);
                break;
            }
        }
        let Some(j) = enter else { return true };
        // leaving: min ratio, ties by smallest basis index (Bland)
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let aij = tableau[(i, j)];
            if aij > EPS {
                let ratio = tableau[(i, rhs)] / aij;
                if ratio < best - EPS || (ratio < best + EPS && leave.map_or(true, |l| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(i) = leave else { return false };
        pivot(tableau, i, j);
        basis[i] = j;
    }
    true // iteration cap; tableau state is still feasible
}

fn pivot(tableau: &mut DMatrix<f64>, row: usize, col: usize) {
    let nrows = tableau.nrows();
    let ncols = tableau.ncols();
    let p = tableau[(row, col)];
    for j in 0..ncols {
        tableau[(row, j)] /= p;
    }
    for i in 0..nrows {
        if i != row {
            let f = tableau[(i, col)];
            if f != 0.0 {
                for j in 0..ncols {
                    let t = tableau[(row, j)];
                    tableau[(i, j)] -= f * t;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_basic() {
        // max x + 2y s.t. x + y + s = 4, x, y, s >= 0  -> y = 4, obj 8
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[4.0]);
        let c = DVector::from_row_slice(&[1.0, 2.0, 0.0]);
        match solve_eq_lp(&a, &b, &c) {
            LpOutcome::Optimal { objective, .. } => assert!((objective - 8.0).abs() < 1e-9),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn infeasible_detected() {
        // x1 + x2 = -1 with x >= 0 is infeasible after sign flip: -x1 - x2 = 1
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_row_slice(&[-1.0]);
        let c = DVector::from_row_slice(&[1.0, 0.0]);
        assert_eq!(solve_eq_lp(&a, &b, &c), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // max x1 s.t. x1 - x2 = 0: ray x1 = x2 -> unbounded
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_row_slice(&[0.0]);
        let c = DVector::from_row_slice(&[1.0, 0.0]);
        assert_eq!(solve_eq_lp(&a, &b, &c), LpOutcome::Unbounded);
    }
}
