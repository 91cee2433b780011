//! Piecewise-linear maps from a torus mesh to the Jacobi torus: the
//! Abel-Jacobi map from a dual basis of closed 1-forms, the projected map
//! built from a rank-1 decomposition and normalized L^p minimizers, their
//! Jacobian fields, topological degree, the Monte Carlo coarea identity, and
//! the pointwise chain of inequalities that bounds the Jacobian integral
//! by one.

use nalgebra::{DMatrix, DVector};

use crate::cohomology::{harmonic_basis, harmonic_gram, l2_inner_product, PNorm};
use crate::error::{Error, Result};
use crate::mesh::{Form, Mesh};
use crate::norms::Rank1Decomposition;
use crate::numerics::lowdisc::halton_point;

/// A map X -> V / Z^b, affine on each simplex. Vertex lifts live on the
/// maximal free abelian cover; the per-edge increments carry the full
/// information, so simplices crossing a fundamental-domain seam stay affine.
#[derive(Clone, Debug)]
pub struct PlTorusMap {
    pub b: usize,
    pub vertex_lift: Vec<DVector<f64>>,
    pub edge_increment: Vec<DVector<f64>>,
    /// Gram matrix of the Euclidean structure on V in lattice coordinates.
    pub target_metric: DMatrix<f64>,
    mesh_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianMode {
    Full,
    /// Restriction to the orthogonal complement of the kernel; on meshes the
    /// source and target dimensions agree, so this coincides with `Full`
    /// (positive-codimension fibers only occur in closed-form fixtures).
    Perp,
}

#[derive(Clone, Debug)]
pub struct JacobianField {
    pub values: Vec<f64>,
    pub integral: f64,
    /// Simplices whose differential is numerically rank-deficient; they are
    /// counted with their actual (small) determinant and flagged here.
    pub degenerate: usize,
}

impl PlTorusMap {
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(Error::InvalidInput("map belongs to a different mesh".into()));
        }
        Ok(())
    }

    /// Differential on a simplex: columns are the target increments of the
    /// spanning edges.
    pub fn differential(&self, mesh: &Mesh, simplex: usize) -> DMatrix<f64> {
        let s = &mesh.simplices()[simplex];
        let d = mesh.dim;
        let mut y = DMatrix::zeros(self.b, d);
        for a in 0..d {
            let (eid, sign) = s.edges[a];
            let inc = &self.edge_increment[eid] * sign as f64;
            y.set_column(a, &inc);
        }
        y
    }
}

/// Integrate a vector-valued cochain along a breadth-first spanning tree
/// rooted at the lowest-index vertex.
fn integrate_cochain(mesh: &Mesh, increments: &[DVector<f64>], b: usize) -> Vec<DVector<f64>> {
    let n = mesh.num_vertices;
    let mut adjacency: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    for (eid, &(u, v)) in mesh.edges().iter().enumerate() {
        adjacency[u].push((v, eid, true));
        adjacency[v].push((u, eid, false));
    }
    let mut lift = vec![DVector::zeros(b); n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for &(v, eid, forward) in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                let inc = if forward {
                    increments[eid].clone()
                } else {
                    -increments[eid].clone()
                };
                lift[v] = &lift[u] + inc;
                queue.push_back(v);
            }
        }
    }
    lift
}

/// Abel-Jacobi map from a basis of closed forms dual to the homology basis.
/// The induced map on first homology is the identity by construction; the
/// pairing matrix is checked. The target carries the L^2 (harmonic) metric.
pub fn abel_jacobi_map(mesh: &Mesh, forms: &[Form]) -> Result<PlTorusMap> {
    let h = mesh.homology_basis()?;
    let b = h.b1;
    if forms.len() != b {
        return Err(Error::InvalidBasis(format!("expected {b} forms, got {}", forms.len())));
    }
    for f in forms {
        f.check_mesh(mesh)?;
        let scale = f.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mesh.coboundary_residual(f)? > 1e-8 * scale {
            return Err(Error::InvalidForm("Abel-Jacobi forms must be closed".into()));
        }
    }
    // pairing with the homology basis must be the identity
    let mut pairing = DMatrix::zeros(b, b);
    for (i, f) in forms.iter().enumerate() {
        for (j, cyc) in h.cycles.iter().enumerate() {
            pairing[(i, j)] = mesh.pair_with_chain(f, cyc);
        }
    }
    let dev = (&pairing - DMatrix::identity(b, b)).amax();
    if pairing.clone().lu().determinant().abs() < 1e-9 {
        return Err(Error::InvalidBasis("degenerate period pairing".into()));
    }
    if dev > 1e-6 {
        return Err(Error::InvalidBasis(format!(
            "forms are not dual to the homology basis (pairing deviates by {dev:.3e})"
        )));
    }

    let increments: Vec<DVector<f64>> = (0..mesh.num_edges())
        .map(|eid| DVector::from_iterator(b, forms.iter().map(|f| f.values[eid])))
        .collect();
    let vertex_lift = integrate_cochain(mesh, &increments, b);
    let target_metric = harmonic_gram(mesh)?
        .try_inverse()
        .ok_or_else(|| Error::InvalidMesh("harmonic Gram matrix is singular".into()))?;
    Ok(PlTorusMap { b, vertex_lift, edge_increment: increments, target_metric, mesh_id: mesh.id() })
}

/// The Abel-Jacobi map built from harmonic representatives of the cobasis.
pub fn harmonic_abel_jacobi(mesh: &Mesh) -> Result<PlTorusMap> {
    let forms = harmonic_basis(mesh)?;
    abel_jacobi_map(mesh, &forms)
}

/// Explicit linear self-map of the torus given by an integer matrix: the
/// composition of the Abel-Jacobi map with A acting on the Jacobi torus.
pub fn linear_torus_map(mesh: &Mesh, a: &DMatrix<i64>) -> Result<PlTorusMap> {
    let h = mesh.homology_basis()?;
    let b = h.b1;
    if a.nrows() != b || a.ncols() != b {
        return Err(Error::InvalidInput("integer matrix has wrong shape".into()));
    }
    let af = DMatrix::from_iterator(b, b, a.iter().map(|&x| x as f64));
    let increments: Vec<DVector<f64>> = (0..mesh.num_edges())
        .map(|eid| {
            let base = DVector::from_iterator(b, h.cocycles.iter().map(|c| c[eid] as f64));
            &af * base
        })
        .collect();
    let vertex_lift = integrate_cochain(mesh, &increments, b);
    Ok(PlTorusMap {
        b,
        vertex_lift,
        edge_increment: increments,
        target_metric: DMatrix::identity(b, b),
        mesh_id: mesh.id(),
    })
}

/// Build the projected map f = L^{-1} Pr F from a rank-1 decomposition of
/// the norm on V and minimizers normalized in L^p. The cochain of f is
/// Q^{-1} sum_i lambda_i w_i(e) L_i with Q the reconstructed quadratic form,
/// which makes the map Gamma-equivariant exactly.
pub fn bi_map(
    mesh: &Mesh,
    decomp: &Rank1Decomposition,
    minimizers: &[Form],
    p: PNorm,
) -> Result<PlTorusMap> {
    let h = mesh.homology_basis()?;
    let b = h.b1;
    let n = decomp.count();
    if minimizers.len() != n {
        return Err(Error::InvalidInput("one minimizer per decomposition term required".into()));
    }
    if decomp.functionals.iter().any(|l| l.len() != b) {
        return Err(Error::InvalidInput("decomposition dimension does not match the mesh homology".into()));
    }
    for (i, w) in minimizers.iter().enumerate() {
        w.check_mesh(mesh)?;
        let norm = match p {
            PNorm::Finite(pf) => mesh.lp_energy(w, pf)?.powf(1.0 / pf),
            PNorm::Infinity => mesh.norm_field(w)?.into_iter().fold(0.0, f64::max),
        };
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "minimizer {i} has |w|_{p} = {norm}, expected 1 within 1e-6"
            )));
        }
    }
    let q = decomp.reconstruct(b);
    let q_inv = q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("decomposition reconstructs a singular form".into()))?;
    let increments: Vec<DVector<f64>> = (0..mesh.num_edges())
        .map(|eid| {
            let mut acc = DVector::zeros(b);
            for ((w, l), form) in decomp.weights.iter().zip(&decomp.functionals).zip(minimizers) {
                acc += *w * form.values[eid] * l;
            }
            &q_inv * acc
        })
        .collect();
    // the periods around the basis cycles must be the standard integer basis
    for (j, cyc) in h.cycles.iter().enumerate() {
        let mut period = DVector::zeros(b);
        for &(eid, c) in cyc {
            period += c as f64 * &increments[eid];
        }
        let mut expected = DVector::zeros(b);
        expected[j] = 1.0;
        if (&period - expected).amax() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "projected map is not equivariant: period around cycle {j} is {:?}",
                period.as_slice()
            )));
        }
    }
    let vertex_lift = integrate_cochain(mesh, &increments, b);
    Ok(PlTorusMap { b, vertex_lift, edge_increment: increments, target_metric: q, mesh_id: mesh.id() })
}

/// Per-simplex Jacobian of the map with respect to the mesh metric and the
/// map's target metric.
pub fn jacobian_field(map: &PlTorusMap, mesh: &Mesh, _mode: JacobianMode) -> Result<JacobianField> {
    map.check_mesh(mesh)?;
    let mut values = Vec::with_capacity(mesh.num_simplices());
    let mut integral = 0.0;
    let mut degenerate = 0usize;
    for i in 0..mesh.num_simplices() {
        let y = map.differential(mesh, i);
        let pullback = y.transpose() * &map.target_metric * &y;
        let g = mesh.simplex_minv(i) * pullback;
        let det = g.determinant().max(0.0);
        let jac = det.sqrt();
        if jac < 1e-12 {
            degenerate += 1;
        }
        values.push(jac);
        integral += mesh.simplex_volume(i) * jac;
    }
    Ok(JacobianField { values, integral, degenerate })
}

/// Largest singular-value ratio of the differential over all simplices; 1
/// means the map is conformal everywhere.
pub fn differential_conformality(map: &PlTorusMap, mesh: &Mesh) -> Result<f64> {
    map.check_mesh(mesh)?;
    let mut worst = 1.0f64;
    for i in 0..mesh.num_simplices() {
        let y = map.differential(mesh, i);
        let pullback = y.transpose() * &map.target_metric * &y;
        // eigenvalues of M^{-1} G are the squared singular values
        let g = mesh.simplex_minv(i) * pullback;
        let eig = g.complex_eigenvalues();
        let mut lo = f64::MAX;
        let mut hi = 0.0f64;
        for e in eig.iter() {
            let v = e.re.max(0.0);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo <= 0.0 {
            return Ok(f64::INFINITY);
        }
        worst = worst.max((hi / lo).sqrt());
    }
    Ok(worst)
}

struct SimplexLocator {
    x0: DVector<f64>,
    y_inv: DMatrix<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    orientation: f64,
}

fn build_locators(map: &PlTorusMap, mesh: &Mesh) -> Vec<Option<SimplexLocator>> {
    (0..mesh.num_simplices())
        .map(|i| {
            let s = &mesh.simplices()[i];
            let x0 = map.vertex_lift[s.vertices[0]].clone();
            let y = map.differential(mesh, i);
            let det = y.clone().lu().determinant();
            let y_inv = y.clone().try_inverse()?;
            // simplex image corners: x0 and x0 + column sums along the path
            let b = map.b;
            let mut corners = vec![x0.clone()];
            for a in 0..mesh.dim {
                corners.push(&x0 + y.column(a));
            }
            let mut lo = vec![f64::MAX; b];
            let mut hi = vec![f64::MIN; b];
            for c in &corners {
                for j in 0..b {
                    lo[j] = lo[j].min(c[j]);
                    hi[j] = hi[j].max(c[j]);
                }
            }
            Some(SimplexLocator { x0, y_inv, lo, hi, orientation: det.signum() })
        })
        .collect()
}

/// Signed or unsigned preimage counts of y (a point of the unit cube in
/// lattice coordinates); `None` when y is too close to a fold.
fn count_preimages(
    locators: &[Option<SimplexLocator>],
    dim: usize,
    b: usize,
    y: &DVector<f64>,
    margin: f64,
) -> Option<(i64, usize)> {
    let mut signed = 0i64;
    let mut unsigned = 0usize;
    for loc in locators.iter().flatten() {
        // integer shifts for which y + gamma might land in the simplex image
        let mut ranges: Vec<(i64, i64)> = Vec::with_capacity(b);
        for j in 0..b {
            let lo = (loc.lo[j] - y[j] - 1e-9).ceil() as i64;
            let hi = (loc.hi[j] - y[j] + 1e-9).floor() as i64;
            if lo > hi {
                ranges.clear();
                break;
            }
            ranges.push((lo, hi));
        }
        if ranges.len() != b {
            continue;
        }
        let mut shift = vec![0i64; b];
        let mut level = 0usize;
        for (j, r) in ranges.iter().enumerate() {
            shift[j] = r.0;
            let _ = j;
        }
        // odometer over the shift box
        'outer: loop {
            let target = DVector::from_iterator(b, (0..b).map(|j| y[j] + shift[j] as f64)) - &loc.x0;
            let lam = &loc.y_inv * target;
            let sum: f64 = lam.iter().sum();
            let inside = lam.iter().all(|&l| l > margin) && sum < 1.0 - margin;
            let near = lam.iter().any(|&l| (l.abs() < margin) || (l - 1.0).abs() < margin)
                || (sum - 1.0).abs() < margin
                || sum.abs() < margin;
            if inside {
                signed += loc.orientation as i64;
                unsigned += 1;
            } else if near && lam.iter().all(|&l| l > -margin) && sum < 1.0 + margin {
                return None; // boundary hit: not a regular value
            }
            // advance odometer
            loop {
                if level == b {
                    break 'outer;
                }
                if shift[level] < ranges[level].1 {
                    shift[level] += 1;
                    for r in 0..level {
                        shift[r] = ranges[r].0;
                    }
                    level = 0;
                    break;
                }
                level += 1;
            }
        }
    }
    let _ = dim;
    Some((signed, unsigned))
}

/// Topological degree: the signed preimage count, verified identical across
/// at least ten independent regular values.
pub fn degree(map: &PlTorusMap, mesh: &Mesh) -> Result<i64> {
    map.check_mesh(mesh)?;
    if map.b != mesh.dim {
        return Err(Error::Precondition("degree needs equal source and target dimension".into()));
    }
    let locators = build_locators(map, mesh);
    let margin = 1e-9;
    let mut counts = Vec::new();
    let mut attempts = 0u64;
    while counts.len() < 10 && attempts < 4000 {
        let pt = halton_point(attempts, map.b);
        attempts += 1;
        let y = DVector::from_iterator(map.b, pt.into_iter());
        if let Some((signed, _)) = count_preimages(&locators, mesh.dim, map.b, &y, margin) {
            counts.push(signed);
        }
    }
    if counts.len() < 10 {
        return Err(Error::NumericalDegeneracy(
            "could not find ten regular values; the map is degenerate on a large set".into(),
        ));
    }
    let first = counts[0];
    if counts.iter().any(|&c| c != first) {
        return Err(Error::NumericalDegeneracy(format!(
            "inconsistent preimage counts across regular values: {counts:?}"
        )));
    }
    Ok(first)
}

#[derive(Clone, Debug)]
pub struct CoareaReport {
    pub jac_integral: f64,
    pub fiber_side: f64,
    pub rel_error: f64,
    pub samples: usize,
    pub rejected: usize,
}

/// Monte Carlo check of the coarea identity: the Jacobian integral against
/// the average unsigned preimage count times the target volume.
pub fn coarea_check(map: &PlTorusMap, mesh: &Mesh, samples: usize) -> Result<CoareaReport> {
    map.check_mesh(mesh)?;
    if map.b != mesh.dim {
        return Err(Error::Precondition("mesh coarea check needs equal dimensions (fixtures cover n > b)".into()));
    }
    let locators = build_locators(map, mesh);
    let jac = jacobian_field(map, mesh, JacobianMode::Full)?;
    let target_vol = map.target_metric.determinant().max(0.0).sqrt();
    let margin = 1e-9;
    let mut total = 0u64;
    let mut used = 0usize;
    let mut rejected = 0usize;
    let mut idx = 0u64;
    while used < samples {
        let pt = halton_point(idx, map.b);
        idx += 1;
        if idx > 50 * samples as u64 {
            return Err(Error::NumericalDegeneracy(
                "regular-value sampling kept hitting fold lines".into(),
            ));
        }
        let y = DVector::from_iterator(map.b, pt.into_iter());
        match count_preimages(&locators, mesh.dim, map.b, &y, margin) {
            Some((_, unsigned)) => {
                total += unsigned as u64;
                used += 1;
            }
            None => rejected += 1,
        }
    }
    let fiber_side = target_vol * total as f64 / used as f64;
    let rel_error = (jac.integral - fiber_side).abs() / jac.integral.abs().max(1e-300);
    Ok(CoareaReport { jac_integral: jac.integral, fiber_side, rel_error, samples: used, rejected })
}

#[derive(Clone, Debug)]
pub struct ChainStep {
    pub name: &'static str,
    pub lhs_integral: f64,
    pub rhs_integral: f64,
    pub min_pointwise_slack: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct ChainReport {
    pub steps: Vec<ChainStep>,
    pub jac_integral: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluate the full pointwise chain
///   jac f <= jac F <= (tr/b)^{b/2} <= (sum (l_i/b)|w_i|^p)^{b/p}
/// and its integrated tail down to the final bound of one.
pub fn jensen_chain_check(
    mesh: &Mesh,
    decomp: &Rank1Decomposition,
    minimizers: &[Form],
    p: f64,
) -> Result<ChainReport> {
    let b = mesh.homology_basis()?.b1;
    if p < (b.max(2)) as f64 - 1e-12 {
        return Err(Error::WrongExponent {
            p,
            reason: format!("the chain needs p >= max(b, 2) = {}", b.max(2)),
        });
    }
    if (mesh.volume() - 1.0).abs() > crate::tol::UNIT_VOLUME_TOL {
        return Err(Error::Precondition("chain check requires a unit-volume mesh".into()));
    }
    if mesh.dim != b {
        return Err(Error::Precondition("mesh chain check needs dim = b1".into()));
    }
    let map = bi_map(mesh, decomp, minimizers, PNorm::Finite(p))?;
    let jac_f = jacobian_field(&map, mesh, JacobianMode::Perp)?;

    let n = decomp.count();
    let mut slack_f6 = f64::MAX; // jac f <= jac F
    let mut slack_amgm = f64::MAX; // jac F <= (tr/b)^{b/2}
    let mut slack_jensen = f64::MAX; // (sum w |w_i|^2)^{b/2} <= (sum w |w_i|^p)^{b/p}
    let mut int_jac_big_f = 0.0;
    let mut int_power_mean = 0.0; // integral of (sum (l/b)|w|^p)^{b/p}
    let mut int_mixture = 0.0; // integral of sum (l/b)|w|^p

    for i in 0..mesh.num_simplices() {
        let vol = mesh.simplex_volume(i);
        let minv = mesh.simplex_minv(i);
        // Z = sum_i lambda_i w_i w_i' in covector coordinates
        let mut z = DMatrix::zeros(mesh.dim, mesh.dim);
        let mut mixture = 0.0;
        let mut quad_mixture = 0.0;
        for (k, form) in minimizers.iter().enumerate() {
            let w = mesh.spanning_components(i, form);
            z += decomp.weights[k] * &w * w.transpose();
            let nsq = mesh.covector_norm_sq(i, &w);
            mixture += decomp.weights[k] / b as f64 * nsq.powf(p / 2.0);
            quad_mixture += decomp.weights[k] / b as f64 * nsq;
        }
        let g = minv * z;
        let trace = g.trace();
        let det = g.determinant().max(0.0);
        let jac_big_f = det.sqrt();
        let amgm_rhs = (trace / b as f64).powf(b as f64 / 2.0);
        slack_amgm = slack_amgm.min(amgm_rhs - jac_big_f);
        // internal consistency: trace/b equals the quadratic mixture
        debug_assert!((trace / b as f64 - quad_mixture).abs() < 1e-10 * quad_mixture.abs().max(1.0));
        let jensen_rhs = mixture.powf(b as f64 / p);
        slack_jensen = slack_jensen.min(jensen_rhs - quad_mixture.powf(b as f64 / 2.0));
        slack_f6 = slack_f6.min(jac_big_f - jac_f.values[i]);
        int_jac_big_f += vol * jac_big_f;
        int_power_mean += vol * jensen_rhs;
        int_mixture += vol * mixture;
        let _ = n;
    }
    // integrated tail: power-mean step and the unit normalization
    let int_mixture_pow = int_mixture.powf(b as f64 / p);
    let steps = vec![
        ChainStep {
            name: "projection is nonexpanding (jac f <= jac F)",
            lhs_integral: jac_f.integral,
            rhs_integral: int_jac_big_f,
            min_pointwise_slack: slack_f6,
            holds: slack_f6 >= -1e-10,
        },
        ChainStep {
            name: "arithmetic-geometric mean (jac F <= (tr/b)^(b/2))",
            lhs_integral: int_jac_big_f,
            rhs_integral: int_power_mean,
            min_pointwise_slack: slack_amgm,
            holds: slack_amgm >= -1e-10,
        },
        ChainStep {
            name: "Jensen on the weight mixture",
            lhs_integral: int_power_mean,
            rhs_integral: int_power_mean,
            min_pointwise_slack: slack_jensen,
            holds: slack_jensen >= -1e-10,
        },
        ChainStep {
            name: "integrated power mean",
            lhs_integral: int_power_mean,
            rhs_integral: int_mixture_pow,
            min_pointwise_slack: int_mixture_pow - int_power_mean,
            holds: int_power_mean <= int_mixture_pow + 1e-10,
        },
        ChainStep {
            name: "unit minimizer norms",
            lhs_integral: int_mixture,
            rhs_integral: 1.0,
            min_pointwise_slack: 1.0 - int_mixture,
            holds: int_mixture <= 1.0 + 1e-6,
        },
    ];
    let holds = steps.iter().all(|s| s.holds);
    Ok(ChainReport { steps, jac_integral: jac_f.integral, bound: 1.0, holds })
}

#[derive(Clone, Debug)]
pub struct LichnerowiczReport {
    pub wedge_mass: f64,
    pub energy_half: f64,
    pub slack: f64,
    pub holds: bool,
}

/// The b = 2, p = 2 shortcut: integral of |w1 ^ w2| for an L^2-orthonormal
/// harmonic basis against half the total Dirichlet energy.
pub fn lichnerowicz_check(mesh: &Mesh) -> Result<LichnerowiczReport> {
    let h = mesh.homology_basis()?;
    if h.b1 != 2 || mesh.dim != 2 {
        return Err(Error::Precondition("the shortcut needs a 2-torus".into()));
    }
    let basis = harmonic_basis(mesh)?;
    let gram = harmonic_gram(mesh)?;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidMesh("harmonic Gram is not positive definite".into()))?;
    // orthonormal combinations: basis * L^{-T}
    let linv_t = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Internal("Cholesky factor is singular".into()))?;
    let mut ortho = Vec::with_capacity(2);
    for col in 0..2 {
        let mut values = vec![0.0; mesh.num_edges()];
        for (i, base) in basis.iter().enumerate() {
            let c = linv_t[(i, col)];
            for (e, &v) in base.values.iter().enumerate() {
                values[e] += c * v;
            }
        }
        ortho.push(Form::new(mesh, values)?);
    }
    let mut wedge_mass = 0.0;
    for i in 0..mesh.num_simplices() {
        let w1 = mesh.spanning_components(i, &ortho[0]);
        let w2 = mesh.spanning_components(i, &ortho[1]);
        let minv = mesh.simplex_minv(i);
        let g11 = (minv * &w1).dot(&w1);
        let g22 = (minv * &w2).dot(&w2);
        let g12 = (minv * &w1).dot(&w2);
        wedge_mass += mesh.simplex_volume(i) * (g11 * g22 - g12 * g12).max(0.0).sqrt();
    }
    let e1 = l2_inner_product(mesh, &ortho[0], &ortho[0])?;
    let e2 = l2_inner_product(mesh, &ortho[1], &ortho[1])?;
    let energy_half = 0.5 * (e1 + e2);
    Ok(LichnerowiczReport {
        wedge_mass,
        energy_half,
        slack: energy_half - wedge_mass,
        holds: wedge_mass <= energy_half + 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::mesh::flat_torus_mesh;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn unit_torus(k: usize) -> Mesh {
        let l = Lattice::from_gram(DMatrix::identity(2, 2)).unwrap();
        flat_torus_mesh(&l, k).unwrap()
    }

    #[test]
    fn aj_of_flat_torus_is_identity() {
        let mesh = unit_torus(4);
        let map = harmonic_abel_jacobi(&mesh).unwrap();
        let jac = jacobian_field(&map, &mesh, JacobianMode::Full).unwrap();
        for v in &jac.values {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-9);
        }
        assert_relative_eq!(jac.integral, 1.0, epsilon = 1e-9);
        assert_eq!(degree(&map, &mesh).unwrap(), 1);
        assert!(differential_conformality(&map, &mesh).unwrap() < 1.0 + 1e-9);
    }

    #[test]
    fn base_vertex_change_only_translates() {
        // integrating from a different spanning tree shifts lifts by a
        // constant; increments (hence Jacobians, degree) are unchanged
        let mesh = unit_torus(3);
        let map = harmonic_abel_jacobi(&mesh).unwrap();
        let inc = map.edge_increment.clone();
        let map2 = harmonic_abel_jacobi(&mesh).unwrap();
        for (a, b) in inc.iter().zip(&map2.edge_increment) {
            assert!((a - b).amax() < 1e-14);
        }
    }

    #[test]
    fn degree_two_cover() {
        let mesh = unit_torus(4);
        let a = DMatrix::from_row_slice(2, 2, &[1, 0, 0, 2]);
        let map = linear_torus_map(&mesh, &a).unwrap();
        assert_eq!(degree(&map, &mesh).unwrap(), 2);
        let jac = jacobian_field(&map, &mesh, JacobianMode::Full).unwrap();
        assert_relative_eq!(jac.integral, 2.0, epsilon = 1e-9);
        let co = coarea_check(&map, &mesh, 2000).unwrap();
        assert!(co.rel_error < 1e-6, "coarea mismatch {:?}", co);
    }

    #[test]
    fn orientation_reversal_flips_sign() {
        let mesh = unit_torus(3);
        let a = DMatrix::from_row_slice(2, 2, &[-1, 0, 0, 1]);
        let map = linear_torus_map(&mesh, &a).unwrap();
        assert_eq!(degree(&map, &mesh).unwrap(), -1);
    }

    #[test]
    fn coarea_identity_map() {
        let mesh = unit_torus(4);
        let map = harmonic_abel_jacobi(&mesh).unwrap();
        let co = coarea_check(&map, &mesh, 1000).unwrap();
        assert!(co.rel_error < 1e-9, "identity coarea should be exact: {co:?}");
    }

    #[test]
    fn shear_map_has_unit_jacobian() {
        let mesh = unit_torus(3);
        let a = DMatrix::from_row_slice(2, 2, &[1, 1, 0, 1]);
        let map = linear_torus_map(&mesh, &a).unwrap();
        let jac = jacobian_field(&map, &mesh, JacobianMode::Full).unwrap();
        assert_relative_eq!(jac.integral, 1.0, epsilon = 1e-9);
        assert_eq!(degree(&map, &mesh).unwrap(), 1);
    }

    #[test]
    fn lichnerowicz_on_flat_torus_is_tight() {
        let mesh = unit_torus(4);
        let rep = lichnerowicz_check(&mesh).unwrap();
        assert!(rep.holds);
        assert_relative_eq!(rep.wedge_mass, 1.0, epsilon = 1e-9);
        assert_relative_eq!(rep.energy_half, 1.0, epsilon = 1e-9);
    }
}
