//! Central numeric tolerances.
//!
//! Everything that decides a yes/no question (equality flags, eutaxy margins,
//! enumeration radii) reads its threshold from here so reports can stamp the
//! values they were produced with.

/// Relative inflation of the enumeration radius when collecting minimal
/// vectors, so numerically tied lengths are not missed.
pub const ENUM_RADIUS_INFLATION: f64 = 1e-9;

/// Strict-positivity margin for the eutaxy feasibility program.
pub const EUTAXY_MARGIN: f64 = 1e-8;

/// Positive-definiteness threshold for Gram matrices (smallest eigenvalue,
/// relative to the largest).
pub const GRAM_PD_TOL: f64 = 1e-12;

/// Frobenius tolerance for reconstructing the John quadratic form from a
/// rank-1 decomposition.
pub const RANK1_RECONSTRUCTION_TOL: f64 = 1e-7;

/// Tolerance on the unit dual norm of decomposition functionals.
pub const RANK1_DUAL_NORM_TOL: f64 = 1e-6;

/// Tolerance on the trace condition (sum of weights = dimension).
pub const RANK1_TRACE_TOL: f64 = 1e-8;

/// Stopping criterion of the inscribed-ellipsoid solver: relative determinant
/// improvement below this value ends the outer loop.
pub const JOHN_DET_TOL: f64 = 1e-10;

/// Iteration cap for the inscribed-ellipsoid solver.
pub const JOHN_MAX_ITER: usize = 10_000;

/// First-order optimality residual required of the L^p minimizer.
pub const LP_GRAD_TOL: f64 = 1e-8;

/// Residual required of the harmonic (weakly coclosed) representative.
pub const HARMONIC_RESIDUAL_TOL: f64 = 1e-10;

/// Relative gap at which the minimax (comass) solver stops.
pub const COMASS_GAP_TOL: f64 = 1e-7;

/// Largest finite exponent accepted by the iterative L^p path.
pub const MAX_FINITE_P: f64 = 64.0;

/// Unit-volume check tolerance for operations that require a normalized mesh.
pub const UNIT_VOLUME_TOL: f64 = 1e-9;

/// Equality-candidate threshold on inequality ratios at refinement 32.
pub const EQUALITY_RATIO_TOL: f64 = 0.02;

/// Relative spread (max-min)/mean below which a pointwise norm counts as
/// constant in equality diagnostics.
pub const CONSTANT_NORM_SPREAD_TOL: f64 = 1e-2;

/// Singular-value ratio below which a differential counts as conformal.
pub const CONFORMAL_SV_RATIO_TOL: f64 = 1.01;

/// Relative slack below which the Hermite ratio of the John lattice counts as
/// critical.
pub const JOHN_LATTICE_CRITICAL_TOL: f64 = 0.02;

/// Candidate cap for homology-class enumeration.
pub const ENUM_CANDIDATE_CAP: usize = 1_000_000;
