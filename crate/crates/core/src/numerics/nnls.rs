//! Lawson-Hanson non-negative least squares, used to certify John optimality
//! (the identity must lie in the cone of contact rank-1 forms).

use nalgebra::{DMatrix, DVector};

/// Minimize |Ax - b| subject to x >= 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-13 * a.amax().max(1.0) * b.amax().max(1.0);

    for _ in 0..max_iter {
        // gradient of 0.5|Ax-b|^2 is A'(Ax-b); w = -gradient
        let resid = b - a * &x;
        let w = a.transpose() * &resid;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol {
                if best.map_or(true, |(_, v)| w[j] > v) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;

        loop {
            // least squares on passive set
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let ap = a.select_columns(idx.iter());
            let sol = ap
                .clone()
                .svd(true, true)
                .solve(b, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if sol.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (kk, &j) in idx.iter().enumerate() {
                    x[j] = sol[kk];
                }
                break;
            }
            // shrink toward feasibility
            let mut alpha = f64::INFINITY;
            for (kk, &j) in idx.iter().enumerate() {
                if sol[kk] <= 0.0 {
                    let denom = x[j] - sol[kk];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (kk, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sol[kk] - x[j]);
                if x[j] <= tol.max(1e-14) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negative_solution() {
        // unconstrained solution is (-1, 2); NNLS must zero the first entry
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_row_slice(&[-1.0, 2.0]);
        let x = nnls(&a, &b, 50);
        assert!(x[0].abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_cone_membership() {
        // identity as a combination of three 60-degree rank-1 forms in sym-vec coords
        // s(theta) = (c^2, sqrt2*c*s, s^2)
        let cols: Vec<f64> = [0.0f64, 60.0, 120.0]
            .iter()
            .flat_map(|deg| {
                let t = deg.to_radians();
                let (s, c) = t.sin_cos();
                vec![c * c, std::f64::consts::SQRT_2 * c * s, s * s]
            })
            .collect();
        let a = DMatrix::from_vec(3, 3, cols); // column-major: each column one form
        let b = DVector::from_row_slice(&[1.0, 0.0, 1.0]);
        let x = nnls(&a, &b, 100);
        let r = (&a * &x - &b).norm();
        assert!(r < 1e-10, "residual {r}");
        for v in x.iter() {
            assert!((v - 2.0 / 3.0).abs() < 1e-8);
        }
    }
}
