//! Euclidean lattices: shortest vectors by enumeration, Hermite ratios,
//! perfection and eutaxy certificates, and the catalog of critical lattices
//! in dimensions 1 through 4.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::simplex_lp::{solve_eq_lp, LpOutcome};
use crate::numerics::sym_to_vec;
use crate::tol;

/// Full-rank lattice, stored by its Gram matrix. The basis is the fixed
/// lower-triangular factor B with B'B = gram, so equal Gram matrices always
/// produce identical bases.
#[derive(Clone, Debug)]
pub struct Lattice {
    basis: DMatrix<f64>,
    gram: DMatrix<f64>,
}

/// All vectors realizing the minimum length, in integer basis coordinates.
#[derive(Clone, Debug)]
pub struct MinimalVectorSet {
    pub vectors: Vec<Vec<i64>>,
    pub length: f64,
}

/// Outcome of the eutaxy feasibility program. Boundary cases within the
/// positivity margin are reported as indeterminate rather than guessed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Eutaxy {
    Eutactic,
    NotEutactic,
    Indeterminate,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    gram: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn from_gram(gram: DMatrix<f64>) -> Result<Self> {
        let b = gram.nrows();
        if b == 0 || gram.ncols() != b {
            return Err(Error::InvalidLattice("gram matrix must be square and nonempty".into()));
        }
        let scale = gram.amax();
        for i in 0..b {
            for j in 0..b {
                if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-9 * scale.max(1.0) {
                    return Err(Error::InvalidLattice("gram matrix is not symmetric".into()));
                }
            }
        }
        let sym = (gram.clone() + gram.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if !(min_eig > tol::GRAM_PD_TOL * max_eig.max(1.0)) {
            return Err(Error::InvalidLattice(format!(
                "gram matrix is not positive definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        let basis = lower_factor(&sym)?;
        Ok(Lattice { basis, gram: sym })
    }

    /// Columns of `basis` are the generators; the stored Gram matrix is
    /// basis' * basis.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        let gram = basis.transpose() * &basis;
        Self::from_gram(gram)
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Euclidean embedding of an integer coordinate vector.
    pub fn embed(&self, v: &[i64]) -> DVector<f64> {
        let coords = DVector::from_iterator(v.len(), v.iter().map(|&x| x as f64));
        &self.basis * coords
    }

    pub fn norm_sq(&self, v: &[i64]) -> f64 {
        let coords = DVector::from_iterator(v.len(), v.iter().map(|&x| x as f64));
        (self.gram.clone() * &coords).dot(&coords)
    }

    pub fn covolume(&self) -> f64 {
        self.gram.determinant().max(0.0).sqrt()
    }

    pub fn to_json_string(&self) -> String {
        let rows = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.gram[(i, j)]).collect())
            .collect();
        serde_json::to_string_pretty(&LatticeJson { gram: rows }).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: LatticeJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("lattice json: {e}")))?;
        let b = parsed.gram.len();
        if b == 0 || parsed.gram.iter().any(|r| r.len() != b) {
            return Err(Error::InvalidLattice("gram rows must form a square matrix".into()));
        }
        let flat: Vec<f64> = parsed.gram.into_iter().flatten().collect();
        Self::from_gram(DMatrix::from_row_slice(b, b, &flat))
    }
}

/// Lower-triangular B with positive diagonal and B'B = G, computed by
/// reversing a Cholesky factorization.
fn lower_factor(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = g.nrows();
    let mut rev = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            rev[(i, j)] = g[(b - 1 - i, b - 1 - j)];
        }
    }
    let chol = rev
        .cholesky()
        .ok_or_else(|| Error::InvalidLattice("Cholesky factorization failed".into()))?;
    let c = chol.l();
    let mut out = DMatrix::zeros(b, b);
    // B = P C' P where P is the index reversal
    for i in 0..b {
        for j in 0..b {
            out[(i, j)] = c[(b - 1 - j, b - 1 - i)];
        }
    }
    Ok(out)
}

/// All nonzero integer vectors x with x'Gx <= radius_sq, by Fincke-Pohst
/// style enumeration on the Cholesky factor. Errors when the candidate count
/// exceeds the resource cap.
pub fn vectors_within(gram: &DMatrix<f64>, radius_sq: f64) -> Result<Vec<(Vec<i64>, f64)>> {
    let b = gram.nrows();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidLattice("gram matrix is not positive definite".into()))?;
    let r = chol.l().transpose(); // upper triangular, |Rx|^2 = x'Gx

    let mut found = Vec::new();
    let mut x = vec![0i64; b];
    let mut visited = 0usize;
    enumerate_level(&r, radius_sq, b, &mut x, 0.0, &mut found, &mut visited)?;
    found.retain(|(v, _)| v.iter().any(|&c| c != 0));
    Ok(found)
}

fn enumerate_level(
    r: &DMatrix<f64>,
    radius_sq: f64,
    level: usize,
    x: &mut Vec<i64>,
    partial: f64,
    found: &mut Vec<(Vec<i64>, f64)>,
    visited: &mut usize,
) -> Result<()> {
    if level == 0 {
        found.push((x.clone(), partial));
        if found.len() > tol::ENUM_CANDIDATE_CAP {
            return Err(Error::Resource(format!(
                "lattice enumeration exceeded {} candidates",
                tol::ENUM_CANDIDATE_CAP
            )));
        }
        return Ok(());
    }
    let i = level - 1;
    let rii = r[(i, i)];
    let mut offset = 0.0;
    for j in level..r.ncols() {
        offset += r[(i, j)] * x[j] as f64;
    }
    let remaining = radius_sq - partial;
    if remaining < 0.0 {
        return Ok(());
    }
    let half_width = remaining.sqrt() / rii;
    let center = -offset / rii;
    let lo = (center - half_width - 1e-12).ceil() as i64;
    let hi = (center + half_width + 1e-12).floor() as i64;
    for xi in lo..=hi {
        *visited += 1;
        if *visited > 50 * tol::ENUM_CANDIDATE_CAP {
            return Err(Error::Resource("lattice enumeration node budget exhausted".into()));
        }
        let term = rii * xi as f64 + offset;
        let new_partial = partial + term * term;
        if new_partial <= radius_sq + 1e-12 * radius_sq.max(1.0) {
            x[i] = xi;
            enumerate_level(r, radius_sq, i, x, new_partial, found, visited)?;
        }
    }
    x[i] = 0;
    Ok(())
}

/// Minimum length and the complete set of minimal vectors.
pub fn shortest_vectors(lattice: &Lattice) -> Result<MinimalVectorSet> {
    let b = lattice.dim();
    if b > 8 {
        return Err(Error::UnsupportedDimension { dim: b, reason: "enumeration is limited to b <= 8".into() });
    }
    let gram = lattice.gram();
    // basis vectors give an initial upper bound
    let ub = (0..b).map(|i| gram[(i, i)]).fold(f64::MAX, f64::min);
    let candidates = vectors_within(gram, ub * (1.0 + 4.0 * tol::ENUM_RADIUS_INFLATION))?;
    let min_sq = candidates
        .iter()
        .map(|&(_, n)| n)
        .fold(f64::MAX, f64::min);
    if !min_sq.is_finite() {
        return Err(Error::Internal("enumeration found no vectors".into()));
    }
    let keep = min_sq * (1.0 + 2.0 * tol::ENUM_RADIUS_INFLATION);
    let mut vectors: Vec<Vec<i64>> = candidates
        .into_iter()
        .filter(|&(_, n)| n <= keep)
        .map(|(v, _)| v)
        .collect();
    vectors.sort();
    Ok(MinimalVectorSet { vectors, length: min_sq.sqrt() })
}

/// lambda_1(L)^b / covol(L), the scale-invariant Hermite ratio maximized by
/// critical lattices.
pub fn hermite_ratio(lattice: &Lattice) -> Result<f64> {
    let sv = shortest_vectors(lattice)?;
    Ok(sv.length.powi(lattice.dim() as i32) / lattice.covolume())
}

/// A lattice is perfect when the rank-1 forms of its minimal vectors span
/// the whole space of symmetric matrices.
pub fn is_perfect(lattice: &Lattice) -> Result<bool> {
    let b = lattice.dim();
    let half = half_minimal_vectors(lattice)?;
    let m = b * (b + 1) / 2;
    let mut rows = DMatrix::zeros(half.len(), m);
    for (k, v) in half.iter().enumerate() {
        let w = lattice.embed(v);
        let s = &w * w.transpose();
        rows.set_row(k, &sym_to_vec(&s).transpose());
    }
    let svd = rows.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * smax.max(1.0))
        .count();
    Ok(rank == m)
}

/// Eutaxy with a strict-positivity margin, decided by a feasibility LP:
/// maximize t subject to sum_v c_v vv' = Id and c_v >= t.
pub fn eutaxy(lattice: &Lattice) -> Result<Eutaxy> {
    let b = lattice.dim();
    let half = half_minimal_vectors(lattice)?;
    let m = b * (b + 1) / 2;
    let nv = half.len();
    // variables: d_v >= 0 (v in 0..nv), t_plus, t_minus
    let ncols = nv + 2;
    let mut a = DMatrix::zeros(m, ncols);
    let mut sum_forms = DVector::zeros(m);
    for (k, v) in half.iter().enumerate() {
        let w = lattice.embed(v);
        let col = sym_to_vec(&(&w * w.transpose()));
        a.set_column(k, &col);
        sum_forms += col;
    }
    a.set_column(nv, &sum_forms);
    a.set_column(nv + 1, &(-&sum_forms));
    let rhs = sym_to_vec(&DMatrix::identity(b, b));
    let mut c = DVector::zeros(ncols);
    c[nv] = 1.0;
    c[nv + 1] = -1.0;

    match solve_eq_lp(&a, &rhs, &c) {
        LpOutcome::Infeasible => Ok(Eutaxy::NotEutactic),
        LpOutcome::Unbounded => Err(Error::Internal("eutaxy LP cannot be unbounded".into())),
        LpOutcome::Optimal { objective, .. } => {
            if objective >= tol::EUTAXY_MARGIN {
                Ok(Eutaxy::Eutactic)
            } else if objective <= -tol::EUTAXY_MARGIN {
                Ok(Eutaxy::NotEutactic)
            } else {
                Ok(Eutaxy::Indeterminate)
            }
        }
    }
}

pub fn is_eutactic(lattice: &Lattice) -> Result<bool> {
    Ok(eutaxy(lattice)? == Eutaxy::Eutactic)
}

fn half_minimal_vectors(lattice: &Lattice) -> Result<Vec<Vec<i64>>> {
    let sv = shortest_vectors(lattice)?;
    Ok(sv
        .vectors
        .into_iter()
        .filter(|v| {
            v.iter()
                .find(|&&c| c != 0)
                .map(|&c| c > 0)
                .unwrap_or(false)
        })
        .collect())
}

/// gamma_b^{b/2}: the catalog value of the Hermite ratio supremum.
pub fn hermite_power_constant(b: usize) -> Result<f64> {
    match b {
        1 => Ok(1.0),
        2 => Ok(2.0 / 3.0_f64.sqrt()),
        3 => Ok(2.0_f64.sqrt()),
        4 => Ok(2.0),
        _ => Err(Error::UnsupportedDimension {
            dim: b,
            reason: "critical catalog covers 1 <= b <= 4".into(),
        }),
    }
}

/// The known optimal lattices: Z, A2, A3 (= D3), D4.
pub fn critical_lattice(b: usize) -> Result<Lattice> {
    let gram = match b {
        1 => DMatrix::from_row_slice(1, 1, &[1.0]),
        2 => DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        3 => DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]),
        4 => DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, -1.0, 0.0, 0.0, //
                -1.0, 2.0, -1.0, -1.0, //
                0.0, -1.0, 2.0, 0.0, //
                0.0, -1.0, 0.0, 2.0,
            ],
        ),
        _ => {
            return Err(Error::UnsupportedDimension {
                dim: b,
                reason: "critical catalog covers 1 <= b <= 4".into(),
            })
        }
    };
    Lattice::from_gram(gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent oracle: exhaustive search over a coefficient box.
    fn brute_force_shortest(gram: &DMatrix<f64>, span: i64) -> (f64, Vec<Vec<i64>>) {
        let b = gram.nrows();
        let mut best = f64::MAX;
        let mut coords = vec![0i64; b];
        let mut all: Vec<(Vec<i64>, f64)> = Vec::new();
        fn rec(
            gram: &DMatrix<f64>,
            span: i64,
            level: usize,
            coords: &mut Vec<i64>,
            all: &mut Vec<(Vec<i64>, f64)>,
        ) {
            if level == coords.len() {
                if coords.iter().any(|&c| c != 0) {
                    let x = DVector::from_iterator(coords.len(), coords.iter().map(|&c| c as f64));
                    let n = (gram * &x).dot(&x);
                    all.push((coords.clone(), n));
                }
                return;
            }
            for v in -span..=span {
                coords[level] = v;
                rec(gram, span, level + 1, coords, all);
            }
            coords[level] = 0;
        }
        rec(gram, span, 0, &mut coords, &mut all);
        for &(_, n) in &all {
            best = best.min(n);
        }
        let mins = all
            .into_iter()
            .filter(|&(_, n)| n <= best * (1.0 + 1e-9))
            .map(|(v, _)| v)
            .collect();
        (best.sqrt(), mins)
    }

    #[test]
    fn identity_lattice_minimal_vectors() {
        let l = Lattice::from_gram(DMatrix::identity(2, 2)).unwrap();
        let sv = shortest_vectors(&l).unwrap();
        assert_relative_eq!(sv.length, 1.0, max_relative = 1e-12);
        let mut vs = sv.vectors.clone();
        vs.sort();
        assert_eq!(vs, vec![vec![-1, 0], vec![0, -1], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn hexagonal_lattice_six_minimal_vectors() {
        // expected values frozen from the brute-force oracle over [-3,3]^2
        let l = critical_lattice(2).unwrap();
        let (len, mins) = brute_force_shortest(l.gram(), 3);
        assert_relative_eq!(len, 1.0, max_relative = 1e-12);
        assert_eq!(mins.len(), 6);
        let sv = shortest_vectors(&l).unwrap();
        assert_relative_eq!(sv.length, 1.0, max_relative = 1e-12);
        assert_eq!(sv.vectors.len(), 6);
    }

    #[test]
    fn d4_has_24_minimal_vectors() {
        let l = critical_lattice(4).unwrap();
        let sv = shortest_vectors(&l).unwrap();
        assert_relative_eq!(sv.length, 2.0_f64.sqrt(), max_relative = 1e-12);
        assert_eq!(sv.vectors.len(), 24);
        let (len, mins) = brute_force_shortest(l.gram(), 3);
        assert_relative_eq!(len, 2.0_f64.sqrt(), max_relative = 1e-12);
        assert_eq!(mins.len(), 24);
    }

    #[test]
    fn hermite_ratios_of_catalog() {
        assert_relative_eq!(hermite_ratio(&critical_lattice(1).unwrap()).unwrap(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(
            hermite_ratio(&critical_lattice(2).unwrap()).unwrap(),
            2.0 / 3.0_f64.sqrt(),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            hermite_ratio(&critical_lattice(3).unwrap()).unwrap(),
            2.0_f64.sqrt(),
            epsilon = 1e-10
        );
        assert_relative_eq!(hermite_ratio(&critical_lattice(4).unwrap()).unwrap(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn square_lattice_not_perfect_but_eutactic() {
        let l = Lattice::from_gram(DMatrix::identity(2, 2)).unwrap();
        assert!(!is_perfect(&l).unwrap());
        assert_eq!(eutaxy(&l).unwrap(), Eutaxy::Eutactic);
    }

    #[test]
    fn catalog_lattices_perfect_and_eutactic() {
        for b in 2..=4 {
            let l = critical_lattice(b).unwrap();
            assert!(is_perfect(&l).unwrap(), "b = {b} should be perfect");
            assert_eq!(eutaxy(&l).unwrap(), Eutaxy::Eutactic, "b = {b} should be eutactic");
            let ratio = hermite_ratio(&l).unwrap();
            assert_relative_eq!(ratio, hermite_power_constant(b).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn scale_invariance_of_hermite_ratio() {
        let l = critical_lattice(2).unwrap();
        let scaled = Lattice::from_gram(l.gram() * 6.25).unwrap();
        assert_relative_eq!(
            hermite_ratio(&l).unwrap(),
            hermite_ratio(&scaled).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn basis_is_lower_triangular_factor() {
        let l = critical_lattice(3).unwrap();
        let b = l.basis();
        for i in 0..3 {
            assert!(b[(i, i)] > 0.0);
            for j in i + 1..3 {
                assert!(b[(i, j)].abs() < 1e-12, "basis must be lower triangular");
            }
        }
        let recon = b.transpose() * b;
        assert_relative_eq!(recon[(0, 1)], l.gram()[(0, 1)], epsilon = 1e-12);
        assert_relative_eq!(recon[(2, 2)], l.gram()[(2, 2)], epsilon = 1e-12);
    }

    #[test]
    fn dimension_guard() {
        let l = Lattice::from_gram(DMatrix::identity(9, 9)).unwrap();
        assert!(matches!(
            shortest_vectors(&l),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(matches!(critical_lattice(5), Err(Error::UnsupportedDimension { .. })));
    }

    #[test]
    fn non_pd_gram_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(Lattice::from_gram(g), Err(Error::InvalidLattice(_))));
    }

    #[test]
    fn json_roundtrip() {
        let l = critical_lattice(2).unwrap();
        let s = l.to_json_string();
        let back = Lattice::from_json_str(&s).unwrap();
        assert_relative_eq!(back.gram()[(0, 1)], 0.5, epsilon = 1e-15);
    }
}
