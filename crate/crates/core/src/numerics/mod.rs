//! Internal numerical building blocks: sparse CG, a tiny simplex LP,
//! non-negative least squares, big-integer Smith normal form, and
//! low-discrepancy sampling.

pub mod lowdisc;
pub mod nnls;
pub mod pcg;
pub mod simplex_lp;
pub mod snf;

use nalgebra::{DMatrix, DVector};

/// Symmetric matrix -> coordinate vector with sqrt(2)-scaled off-diagonals,
/// so Frobenius inner products become plain dot products.
pub fn sym_to_vec(m: &DMatrix<f64>) -> DVector<f64> {
    let b = m.nrows();
    let mut v = DVector::zeros(b * (b + 1) / 2);
    let mut k = 0;
    for i in 0..b {
        for j in i..b {
            v[k] = if i == j { m[(i, i)] } else { std::f64::consts::SQRT_2 * m[(i, j)] };
            k += 1;
        }
    }
    v
}

/// Inverse of [sym_to_vec].
pub fn vec_to_sym(v: &DVector<f64>, b: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(b, b);
    let mut k = 0;
    for i in 0..b {
        for j in i..b {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_vec_roundtrip_preserves_frobenius() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let v = sym_to_vec(&a);
        assert_eq!(vec_to_sym(&v, 2), a);
        let fro2: f64 = a.iter().map(|x| x * x).sum();
        assert!((v.dot(&v) - fro2).abs() < 1e-14);
    }
}
