//! Closed-form fixtures for the regime where the manifold dimension exceeds
//! the first Betti number: circle-fibered nilmanifold metrics over a flat
//! 2-torus base, and metric products of a flat torus with a simply-connected
//! fiber. All systolic quantities evaluate exactly, so the fibered
//! inequalities can be checked to machine precision.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{hermite_power_constant, shortest_vectors, Lattice};

/// Submersion metric with geodesic circle fibers of length t over the flat
/// base R^2 / L. The fiber class is central, so it dies in H_1/torsion and
/// the stable norm is the base-lattice Euclidean norm.
#[derive(Clone, Debug)]
pub struct HeisenbergFixture {
    pub base: Lattice,
    pub fiber_length: f64,
}

impl HeisenbergFixture {
    pub fn new(base: Lattice, fiber_length: f64) -> Result<Self> {
        if base.dim() != 2 {
            return Err(Error::UnsupportedDimension {
                dim: base.dim(),
                reason: "the nilmanifold fixture sits over a 2-torus base".into(),
            });
        }
        if !(fiber_length > 0.0) || !fiber_length.is_finite() {
            return Err(Error::InvalidInput("fiber length must be positive".into()));
        }
        Ok(HeisenbergFixture { base, fiber_length })
    }
}

/// Product of a flat torus R^b / L with a fiber manifold of volume v and
/// vanishing first Betti number; the Abel-Jacobi map is the projection and
/// its fibers are copies of the fiber manifold.
#[derive(Clone, Debug)]
pub struct ProductFixture {
    pub base: Lattice,
    pub fiber_volume: f64,
}

impl ProductFixture {
    pub fn new(base: Lattice, fiber_volume: f64) -> Result<Self> {
        if !(fiber_volume > 0.0) || !fiber_volume.is_finite() {
            return Err(Error::InvalidInput("fiber volume must be positive".into()));
        }
        Ok(ProductFixture { base, fiber_volume })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeisenbergQuantities {
    pub stsys1: f64,
    pub pisys1: f64,
    pub vol: f64,
    pub lhs11: f64,
    pub rhs11: f64,
    pub equality: bool,
    /// Fiber length as the geometric degree; only an upper bound for the
    /// minimal fiber volume, and used on the side of the inequality that
    /// this direction supports.
    pub degree_upper_bound: f64,
}

/// Both sides of stsys^b pisys <= gamma_b^{b/2} vol for the fibered metric.
pub fn heisenberg_quantities(fx: &HeisenbergFixture) -> Result<HeisenbergQuantities> {
    let b = fx.base.dim();
    let sv = shortest_vectors(&fx.base)?;
    let stsys1 = sv.length;
    let pisys1 = fx.fiber_length.min(stsys1);
    let vol = fx.base.covolume() * fx.fiber_length;
    let lhs11 = stsys1.powi(b as i32) * pisys1;
    let rhs11 = hermite_power_constant(b)? * vol;
    let scale = lhs11.abs().max(rhs11.abs()).max(1.0);
    if lhs11 > rhs11 + 1e-12 * scale {
        return Err(Error::Internal(format!(
            "fixture arithmetic violated the inequality: {lhs11} > {rhs11}"
        )));
    }
    Ok(HeisenbergQuantities {
        stsys1,
        pisys1,
        vol,
        lhs11,
        rhs11,
        equality: (rhs11 - lhs11) <= 1e-12 * scale,
        degree_upper_bound: fx.fiber_length,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductQuantities {
    pub stsys1: f64,
    pub vol: f64,
    pub deg: f64,
    pub lhs12: f64,
    pub rhs12: f64,
    /// Unit-volume form: deg * stsys^b / vol against gamma_b^{b/2}.
    pub lhs23: f64,
    pub rhs23: f64,
    pub equality: bool,
}

/// Both sides of deg * stsys^b <= gamma_b^{b/2} vol for the product metric,
/// plus the normalized form which is independent of the fiber dimension.
pub fn product_quantities(fx: &ProductFixture) -> Result<ProductQuantities> {
    let b = fx.base.dim();
    let sv = shortest_vectors(&fx.base)?;
    let stsys1 = sv.length;
    let vol = fx.base.covolume() * fx.fiber_volume;
    let deg = fx.fiber_volume;
    let lhs12 = deg * stsys1.powi(b as i32);
    let rhs12 = hermite_power_constant(b)? * vol;
    let lhs23 = lhs12 / vol;
    let rhs23 = hermite_power_constant(b)?;
    let scale = lhs12.abs().max(rhs12.abs()).max(1.0);
    if lhs12 > rhs12 + 1e-12 * scale {
        return Err(Error::Internal(format!(
            "fixture arithmetic violated the inequality: {lhs12} > {rhs12}"
        )));
    }
    Ok(ProductQuantities {
        stsys1,
        vol,
        deg,
        lhs12,
        rhs12,
        lhs23,
        rhs23,
        equality: (rhs12 - lhs12) <= 1e-12 * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::critical_lattice;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    /// Independent oracle: symbolic evaluation of both sides in terms of
    /// lambda_1, covolume, and the catalog constant.
    fn oracle_heisenberg(lambda1: f64, covol: f64, t: f64, b: i32) -> (f64, f64) {
        let gamma = match b {
            2 => 2.0 / 3.0_f64.sqrt(),
            _ => unreachable!(),
        };
        (lambda1.powi(b) * t.min(lambda1), gamma * covol * t)
    }

    #[test]
    fn critical_base_short_fiber_is_equality() {
        let fx = HeisenbergFixture::new(critical_lattice(2).unwrap(), 0.5).unwrap();
        let q = heisenberg_quantities(&fx).unwrap();
        let (lhs, rhs) = oracle_heisenberg(1.0, 3.0_f64.sqrt() / 2.0, 0.5, 2);
        assert_relative_eq!(q.lhs11, lhs, epsilon = 1e-15);
        assert_relative_eq!(q.rhs11, rhs, epsilon = 1e-15);
        assert_relative_eq!(q.lhs11, 0.5, epsilon = 1e-13);
        assert!(q.equality);
    }

    #[test]
    fn square_base_is_strict() {
        let l = Lattice::from_gram(DMatrix::identity(2, 2)).unwrap();
        let fx = HeisenbergFixture::new(l, 0.5).unwrap();
        let q = heisenberg_quantities(&fx).unwrap();
        assert_relative_eq!(q.lhs11, 0.5, epsilon = 1e-15);
        assert_relative_eq!(q.rhs11, 2.0 / 3.0_f64.sqrt() * 0.5, epsilon = 1e-15);
        assert!(!q.equality);
    }

    #[test]
    fn long_fiber_saturates_at_base_systole() {
        let fx = HeisenbergFixture::new(critical_lattice(2).unwrap(), 3.0).unwrap();
        let q = heisenberg_quantities(&fx).unwrap();
        assert_relative_eq!(q.pisys1, 1.0, epsilon = 1e-15);
        assert_relative_eq!(q.lhs11, 1.0, epsilon = 1e-13);
        assert_relative_eq!(q.rhs11, 3.0, epsilon = 1e-13);
        assert!(!q.equality);
    }

    #[test]
    fn product_equality_iff_critical_base() {
        let qa = product_quantities(&ProductFixture::new(critical_lattice(2).unwrap(), 1.0).unwrap()).unwrap();
        assert_relative_eq!(qa.lhs12, 1.0, epsilon = 1e-13);
        assert_relative_eq!(qa.rhs12, 1.0, epsilon = 1e-13);
        assert!(qa.equality);

        let l = Lattice::from_gram(DMatrix::identity(2, 2)).unwrap();
        let qb = product_quantities(&ProductFixture::new(l, 3.0).unwrap()).unwrap();
        assert_relative_eq!(qb.lhs12, 3.0, epsilon = 1e-15);
        assert_relative_eq!(qb.rhs12, 2.0 / 3.0_f64.sqrt() * 3.0, epsilon = 1e-13);
        assert!(!qb.equality);
    }

    #[test]
    fn scaling_base_preserves_the_ratio() {
        let base = critical_lattice(2).unwrap();
        let scaled = Lattice::from_gram(base.gram() * 2.25).unwrap(); // c = 1.5
        let q1 = product_quantities(&ProductFixture::new(base, 1.0).unwrap()).unwrap();
        let q2 = product_quantities(&ProductFixture::new(scaled, 1.0).unwrap()).unwrap();
        assert_relative_eq!(q1.lhs12 / q1.rhs12, q2.lhs12 / q2.rhs12, epsilon = 1e-12);
    }
}
