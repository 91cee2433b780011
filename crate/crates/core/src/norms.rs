//! Finite-dimensional symmetric norms, their inscribed maximum-volume
//! ellipsoids, and the decomposition of the ellipsoid quadratic form into
//! rank-1 forms with unit dual-norm functionals.
//!
//! The solver works in the inverse parametrization P = Q^{-1}: an ellipsoid
//! E = {x : x'Qx <= 1} is inscribed in the unit ball K exactly when
//! y'Py <= h_K(y)^2 for every direction y, where h_K is the support
//! function (a plain vertex maximum for polytopes). log det P is concave and
//! the constraints are linear in P, so a cutting-plane scheme with a log
//! barrier and a Gauss-Newton polish of the active-set KKT system converges
//! to high accuracy in the tiny dimensions we need (b <= 8).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::lowdisc::halton_point;
use crate::numerics::nnls::nnls;
use crate::numerics::{sym_to_vec, vec_to_sym};
use crate::tol;

/// How the unit ball is described.
#[derive(Clone, Debug)]
pub enum NormRep {
    /// Symmetric list of unit-ball vertices (the ball is their convex hull).
    Polytope { vertices: Vec<DVector<f64>> },
    /// ||x||^2 = x'Qx.
    Ellipsoid { q: DMatrix<f64> },
    /// Norm values sampled on a symmetric direction set; discretized to the
    /// polytope spanned by direction/value.
    Samples { directions: Vec<DVector<f64>>, values: Vec<f64> },
}

/// A symmetric finite-dimensional norm.
#[derive(Clone, Debug)]
pub struct NormBody {
    dim: usize,
    rep: NormRep,
    /// Unit-ball vertices used by support evaluations (exact for polytopes,
    /// the sampled hull otherwise; empty for ellipsoidal norms).
    vertices: Vec<DVector<f64>>,
    /// Present for sampled norms: the discretization is *not* hidden.
    pub discretization_note: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Ellipsoid {
    /// ||x||_E^2 = x'Qx; symmetric positive definite.
    pub q: DMatrix<f64>,
}

/// sum_i lambda_i L_i^2 = ||.||_E^2 with ||L_i||* = 1 and sum lambda_i = b.
#[derive(Clone, Debug)]
pub struct Rank1Decomposition {
    pub weights: Vec<f64>,
    pub functionals: Vec<DVector<f64>>,
    /// Set when Caratheodory pivoting stalled and one extra term was kept.
    pub warning: Option<String>,
}

impl Rank1Decomposition {
    pub fn count(&self) -> usize {
        self.weights.len()
    }

    pub fn reconstruct(&self, dim: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(dim, dim);
        for (w, l) in self.weights.iter().zip(&self.functionals) {
            q += *w * l * l.transpose();
        }
        q
    }
}

#[derive(Serialize, Deserialize)]
struct NormJson {
    dim: usize,
    kind: String,
    data: serde_json::Value,
}

impl NormBody {
    pub fn polytope(dim: usize, vertices: Vec<DVector<f64>>) -> Result<Self> {
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidNorm("vertex dimension mismatch".into()));
        }
        if vertices.is_empty() {
            return Err(Error::InvalidNorm("empty polytope".into()));
        }
        let scale = vertices.iter().map(|v| v.amax()).fold(0.0, f64::max);
        if scale <= 0.0 {
            return Err(Error::InvalidNorm("all vertices are zero".into()));
        }
        // symmetry: every vertex needs an antipode in the list
        for v in &vertices {
            let has_neg = vertices.iter().any(|w| (w + v).amax() < 1e-9 * scale);
            if !has_neg {
                return Err(Error::InvalidNorm("vertex list is not closed under negation".into()));
            }
        }
        // the ball must have interior: vertices span R^b
        let mut mat = DMatrix::zeros(vertices.len(), dim);
        for (i, v) in vertices.iter().enumerate() {
            mat.set_row(i, &v.transpose());
        }
        let svd = mat.svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
        if rank < dim {
            return Err(Error::InvalidNorm("vertices do not span the space (degenerate ball)".into()));
        }
        Ok(NormBody { dim, vertices: vertices.clone(), rep: NormRep::Polytope { vertices }, discretization_note: None })
    }

    pub fn ellipsoidal(q: DMatrix<f64>) -> Result<Self> {
        let dim = q.nrows();
        if q.ncols() != dim || dim == 0 {
            return Err(Error::InvalidNorm("quadratic form must be square".into()));
        }
        let sym = (q.clone() + q.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::InvalidNorm("quadratic form is not positive definite".into()));
        }
        Ok(NormBody { dim, vertices: Vec::new(), rep: NormRep::Ellipsoid { q: sym }, discretization_note: None })
    }

    /// Norm values sampled on a symmetric direction set; the unit ball is
    /// discretized as the polytope spanned by direction / value.
    pub fn from_samples(dim: usize, directions: Vec<DVector<f64>>, values: Vec<f64>) -> Result<Self> {
        if directions.len() != values.len() {
            return Err(Error::InvalidNorm("direction/value length mismatch".into()));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidNorm("norm must be positive and finite on all sample directions".into()));
        }
        let mut vertices = Vec::with_capacity(2 * directions.len());
        for (d, &v) in directions.iter().zip(&values) {
            if d.len() != dim {
                return Err(Error::InvalidNorm("direction dimension mismatch".into()));
            }
            vertices.push(d / v);
        }
        // close under negation (callers usually pass half-sets)
        let scale = vertices.iter().map(|v| v.amax()).fold(0.0, f64::max);
        let mut full = vertices.clone();
        for v in &vertices {
            if !full.iter().any(|w| (w + v).amax() < 1e-9 * scale) {
                full.push(-v);
            }
        }
        let note = format!(
            "sampled norm discretized to a {}-vertex polytope; values are exact only on sampled directions",
            full.len()
        );
        let mut body = NormBody::polytope(dim, full)?;
        body.rep = NormRep::Samples { directions, values };
        body.discretization_note = Some(note);
        Ok(body)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rep(&self) -> &NormRep {
        &self.rep
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// Support function of the unit ball = dual norm of the functional.
    pub fn support(&self, y: &DVector<f64>) -> f64 {
        match &self.rep {
            NormRep::Ellipsoid { q } => {
                let qinv = q.clone().try_inverse().expect("validated PD");
                ((qinv * y).dot(y)).max(0.0).sqrt()
            }
            _ => self
                .vertices
                .iter()
                .map(|v| v.dot(y).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn to_json_string(&self) -> String {
        let (kind, data) = match &self.rep {
            NormRep::Polytope { vertices } => (
                "polytope",
                serde_json::json!({
                    "vertices": vertices.iter().map(|v| v.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>()
                }),
            ),
            NormRep::Ellipsoid { q } => (
                "ellipsoid",
                serde_json::json!({
                    "q": (0..self.dim).map(|i| (0..self.dim).map(|j| q[(i,j)]).collect::<Vec<f64>>()).collect::<Vec<_>>()
                }),
            ),
            NormRep::Samples { directions, values } => (
                "samples",
                serde_json::json!({
                    "directions": directions.iter().map(|v| v.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>(),
                    "values": values,
                }),
            ),
        };
        serde_json::to_string_pretty(&NormJson { dim: self.dim, kind: kind.into(), data })
            .expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: NormJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("norm json: {e}")))?;
        let dim = parsed.dim;
        let vecs = |key: &str| -> Result<Vec<DVector<f64>>> {
            let arr: Vec<Vec<f64>> = serde_json::from_value(
                parsed.data.get(key).cloned().ok_or_else(|| Error::InvalidInput(format!("missing '{key}'")))?,
            )
            .map_err(|e| Error::InvalidInput(format!("bad '{key}': {e}")))?;
            Ok(arr.into_iter().map(|v| DVector::from_vec(v)).collect())
        };
        match parsed.kind.as_str() {
            "polytope" => NormBody::polytope(dim, vecs("vertices")?),
            "ellipsoid" => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(
                    parsed.data.get("q").cloned().ok_or_else(|| Error::InvalidInput("missing 'q'".into()))?,
                )
                .map_err(|e| Error::InvalidInput(format!("bad 'q': {e}")))?;
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                NormBody::ellipsoidal(DMatrix::from_row_slice(dim, dim, &flat))
            }
            "samples" => {
                let values: Vec<f64> = serde_json::from_value(
                    parsed.data.get("values").cloned().ok_or_else(|| Error::InvalidInput("missing 'values'".into()))?,
                )
                .map_err(|e| Error::InvalidInput(format!("bad 'values': {e}")))?;
                NormBody::from_samples(dim, vecs("directions")?, values)
            }
            other => Err(Error::InvalidInput(format!("unknown norm kind '{other}'"))),
        }
    }
}

/// Dual norm of a linear functional: sup { <L, x> : ||x|| <= 1 }.
pub fn dual_norm(norm: &NormBody, functional: &DVector<f64>) -> Result<f64> {
    if functional.len() != norm.dim() {
        return Err(Error::InvalidInput("functional dimension mismatch".into()));
    }
    if functional.amax() == 0.0 {
        return Ok(0.0);
    }
    Ok(norm.support(functional))
}

// ---------------------------------------------------------------------------
// inscribed maximum-volume ellipsoid
// ---------------------------------------------------------------------------

/// Maximum-volume ellipsoid inscribed in the unit ball.
pub fn john_ellipsoid(norm: &NormBody) -> Result<Ellipsoid> {
    let b = norm.dim();
    if b > 8 {
        return Err(Error::UnsupportedDimension { dim: b, reason: "inscribed-ellipsoid solver is limited to b <= 8".into() });
    }
    if let NormRep::Ellipsoid { q } = norm.rep() {
        return Ok(Ellipsoid { q: q.clone() });
    }
    let p = solve_inscribed(norm)?;
    let q = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("inscribed solution is singular".into()))?;
    let q = (q.clone() + q.transpose()) * 0.5;
    Ok(Ellipsoid { q })
}

fn seed_directions(b: usize, verts: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    match b {
        1 => dirs.push(DVector::from_vec(vec![1.0])),
        2 => {
            let n = 192;
            for i in 0..n {
                let t = std::f64::consts::PI * (i as f64) / (n as f64);
                dirs.push(DVector::from_vec(vec![t.cos(), t.sin()]));
            }
        }
        3 => {
            // Fibonacci hemisphere
            let n = 384;
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            for i in 0..n {
                let z = (i as f64 + 0.5) / n as f64; // upper hemisphere
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * std::f64::consts::PI * (i as f64) / golden;
                dirs.push(DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z]));
            }
        }
        _ => {
            let n = 256 * b as u64;
            for i in 0..n {
                let h = halton_point(i, b);
                let v = DVector::from_iterator(b, h.into_iter().map(|x| 2.0 * x - 1.0));
                let len = v.norm();
                if len > 1e-3 {
                    dirs.push(v / len);
                }
            }
        }
    }
    for v in verts {
        let len = v.norm();
        if len > 0.0 {
            dirs.push(v / len);
        }
    }
    canonical_dedup(dirs, 1e-12)
}

/// Canonicalize antipodes (first nonzero component positive) and drop
/// near-duplicates.
fn canonical_dedup(dirs: Vec<DVector<f64>>, dot_tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(dirs.len());
    for mut d in dirs {
        if let Some(first) = d.iter().find(|&&x| x.abs() > 1e-14) {
            if *first < 0.0 {
                d = -d;
            }
        }
        if out.iter().all(|e: &DVector<f64>| e.dot(&d).abs() < 1.0 - dot_tol) {
            out.push(d);
        }
    }
    out
}

struct Constraint {
    y: DVector<f64>,
    h_sq: f64,
}

/// Facet normals of the symmetric polytope conv(vertices), scaled so each
/// facet plane is <a, x> = 1. Exhaustive over b-subsets, which is fine for
/// the vertex counts this crate works with; `None` when the subset count
/// would be excessive.
fn enumerate_facets(vertices: &[DVector<f64>], b: usize) -> Option<Vec<DVector<f64>>> {
    let n = vertices.len();
    if n < b {
        return Some(Vec::new());
    }
    // combination count guard
    let mut count: u128 = 1;
    for i in 0..b {
        count = count.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if count > 25_000_000 {
            return None;
        }
    }
    let scale = vertices.iter().map(|v| v.amax()).fold(0.0, f64::max).max(1e-300);

    let mut facets: Vec<DVector<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..b).collect();
    let ones = DVector::from_element(b, 1.0);
    loop {
        // solve W a = 1 for the hyperplane through the chosen vertices
        let mut w = DMatrix::zeros(b, b);
        for (row, &i) in idx.iter().enumerate() {
            w.set_row(row, &vertices[i].transpose());
        }
        let lu = w.lu();
        if let Some(a) = lu.solve(&ones) {
            let amax = a.amax();
            if amax.is_finite() && amax > 1e-10 / scale && amax < 1e12 {
                // supporting-hyperplane test
                let mut supported = true;
                for v in vertices {
                    if v.dot(&a) > 1.0 + 1e-9 {
                        supported = false;
                        break;
                    }
                }
                if supported && facets.iter().all(|f| (f - &a).amax() > 1e-8 * amax) {
                    facets.push(a);
                }
            }
        }
        // next combination
        let mut level = b;
        loop {
            if level == 0 {
                return Some(facets);
            }
            level -= 1;
            if idx[level] + 1 <= n - (b - level) {
                idx[level] += 1;
                for j in level + 1..b {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_inscribed(norm: &NormBody) -> Result<DMatrix<f64>> {
    let b = norm.dim();

    // exact path: finite facet list makes the determinant maximization a
    // plain finitely-constrained problem, no direction probing needed
    if let Some(facets) = enumerate_facets(norm.vertices(), b) {
        if facets.len() >= b {
            let constraints: Vec<Constraint> = facets
                .into_iter()
                .map(|a| Constraint { y: a, h_sq: 1.0 })
                .collect();
            let min_h_sq = 1.0
                / constraints
                    .iter()
                    .map(|c| c.y.norm_squared())
                    .fold(0.0, f64::max);
            let mut p = DMatrix::<f64>::identity(b, b) * (0.5 * min_h_sq);
            barrier_solve(&mut p, &constraints)?;
            polish_active_set(&mut p, &constraints);
            certificate_refine(&mut p, &constraints);
            let worst = constraints
                .iter()
                .map(|c| (&p * &c.y).dot(&c.y) / c.h_sq)
                .fold(0.0, f64::max);
            if worst > 1.0 {
                p /= worst * (1.0 + 1e-15);
            }
            return Ok(p);
        }
    }

    let mut dirs = seed_directions(b, norm.vertices());
    let mut constraints: Vec<Constraint> = dirs
        .drain(..)
        .map(|y| {
            let h = norm.support(&y);
            Constraint { h_sq: h * h, y }
        })
        .collect();

    // strictly feasible start: a small round ball
    let min_h_sq = constraints.iter().map(|c| c.h_sq).fold(f64::MAX, f64::min);
    if !(min_h_sq > 0.0) {
        return Err(Error::InvalidNorm("support function vanishes on a direction".into()));
    }
    let mut p = DMatrix::<f64>::identity(b, b) * (0.5 * min_h_sq);

    let mut last_det = 0.0_f64;
    for _outer in 0..40 {
        barrier_solve(&mut p, &constraints)?;
        polish_active_set(&mut p, &constraints);

        // hunt for violated directions
        let violators = find_violations(norm, &p, &constraints);
        let det = p.determinant();
        let improved = det > last_det * (1.0 + tol::JOHN_DET_TOL);
        last_det = det;
        if violators.is_empty() && !improved {
            break;
        }
        if violators.is_empty() {
            break;
        }
        for y in violators {
            let h = norm.support(&y);
            // keep strict feasibility when the cut arrives
            let v = (&p * &y).dot(&y);
            if v >= h * h {
                p *= 0.999 * h * h / v;
            }
            constraints.push(Constraint { y, h_sq: h * h });
        }
    }

    // final safety projection against a dense probe
    let ratio = worst_ratio(norm, &p);
    if ratio > 1.0 {
        p /= ratio * (1.0 + 1e-14);
    }
    Ok(p)
}

fn barrier_solve(p: &mut DMatrix<f64>, constraints: &[Constraint]) -> Result<()> {
    let b = p.nrows();
    let m = b * (b + 1) / 2;
    let basis: Vec<DMatrix<f64>> = (0..m)
        .map(|k| {
            let mut e = DVector::zeros(m);
            e[k] = 1.0;
            vec_to_sym(&e, b)
        })
        .collect();

    let mut mu = 1.0_f64;
    while mu > 1e-9 {
        for _newton in 0..60 {
            let p_inv = p
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Internal("barrier iterate became singular".into()))?;
            let mut grad = sym_to_vec(&p_inv);
            let mut hess = DMatrix::<f64>::zeros(m, m);
            for (k, ek) in basis.iter().enumerate() {
                let pk = &p_inv * ek * &p_inv;
                let col = sym_to_vec(&pk);
                for l in 0..m {
                    hess[(l, k)] -= col.dot(&sym_to_vec(&basis[l]));
                }
            }
            for c in constraints.iter() {
                let val = (&*p * &c.y).dot(&c.y);
                let s = c.h_sq - val;
                if s <= 0.0 {
                    return Err(Error::Internal("barrier iterate infeasible".into()));
                }
                let a = sym_to_vec(&(&c.y * c.y.transpose()));
                grad.axpy(-mu / s, &a, 1.0);
                let w = mu / (s * s);
                for i in 0..m {
                    for j in 0..m {
                        hess[(i, j)] -= w * a[i] * a[j];
                    }
                }
            }
            // Newton step for a concave objective: solve (-H) d = g
            let neg_h = -hess;
            let Some(chol) = neg_h.clone().cholesky() else { break };
            let d = chol.solve(&grad);
            let decrement = grad.dot(&d);
            if decrement < 1e-16 {
                break;
            }
            // backtracking: stay PD and strictly feasible, increase objective
            let f0 = barrier_value(p, constraints, mu);
            let mut t = 1.0;
            let mut stepped = false;
            for _ in 0..50 {
                let cand = &*p + vec_to_sym(&(t * &d), b);
                if cand.clone().cholesky().is_some()
                    && constraints.iter().all(|c| (&cand * &c.y).dot(&c.y) < c.h_sq)
                {
                    let f1 = barrier_value(&cand, constraints, mu);
                    if f1 > f0 + 1e-16 || t < 1e-8 {
                        *p = cand;
                        stepped = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !stepped {
                break;
            }
            if decrement < 1e-13 {
                break;
            }
        }
        mu *= 0.12;
    }
    Ok(())
}

fn barrier_value(p: &DMatrix<f64>, constraints: &[Constraint], mu: f64) -> f64 {
    let det = p.determinant();
    if det <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut v = det.ln();
    for c in constraints {
        let s = c.h_sq - (p * &c.y).dot(&c.y);
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        v += mu * s.ln();
    }
    v
}

/// Gauss-Newton refinement of the KKT system on the nearly-active set:
/// P^{-1} = sum nu_i y_i y_i' together with exact activity. Constraints whose
/// multiplier goes negative are pruned and the refinement restarted.
fn polish_active_set(p: &mut DMatrix<f64>, constraints: &[Constraint]) {
    let b = p.nrows();
    let m = b * (b + 1) / 2;

    // the active set guessed from an interior-point iterate can miss a true
    // contact, so re-identify it from the polished matrix and go again
    for round in 0..4 {
        let slack_tol = if round == 0 { 1e-3 } else { 1e-5 * (10f64).powi(round) };
        let mut active: Vec<usize> = (0..constraints.len())
            .filter(|&i| {
                let c = &constraints[i];
                let s = c.h_sq - (&*p * &c.y).dot(&c.y);
                s < slack_tol * c.h_sq
            })
            .collect();
        active.sort_by(|&i, &j| {
            let si = (constraints[i].h_sq - (&*p * &constraints[i].y).dot(&constraints[i].y)) / constraints[i].h_sq;
            let sj = (constraints[j].h_sq - (&*p * &constraints[j].y).dot(&constraints[j].y)) / constraints[j].h_sq;
            si.partial_cmp(&sj).unwrap()
        });
        active.truncate(4 * m);
        if active.len() < b {
            return;
        }

        let mut done = false;
        for _prune_round in 0..8 {
            match gauss_newton_kkt(p, constraints, &active) {
                Some((pw, nu, resid)) => {
                    let min_nu = nu.iter().cloned().fold(f64::MAX, f64::min);
                    let max_nu = nu.iter().cloned().fold(0.0_f64, f64::max);
                    let feasible = constraints
                        .iter()
                        .all(|c| (&pw * &c.y).dot(&c.y) <= c.h_sq * (1.0 + 1e-9));
                    if resid < 1e-10 && min_nu > -1e-10 * max_nu.max(1.0) && feasible {
                        *p = pw;
                        return;
                    }
                    // prune the most negative multiplier and retry
                    if active.len() > b && min_nu < 0.0 {
                        let mut worst = 0usize;
                        let mut worst_v = f64::MAX;
                        for (i, &v) in nu.iter().enumerate() {
                            if v < worst_v {
                                worst_v = v;
                                worst = i;
                            }
                        }
                        active.remove(worst);
                        continue;
                    }
                    // residual stuck: adopt genuine improvements, then let the
                    // outer round re-identify the active set
                    if resid < 1e-7 && min_nu > -1e-9 && feasible {
                        *p = pw;
                    }
                    done = resid < 1e-10;
                    break;
                }
                None => return,
            }
        }
        if done {
            return;
        }
    }
}

/// Final safeguard: fit the John certificate on the near-active contacts,
/// then re-run Gauss-Newton with exactly the supported set. Catches the
/// degenerate cases where the generic polish stalls with a contact that
/// carries weight but is not exactly active.
fn certificate_refine(p: &mut DMatrix<f64>, constraints: &[Constraint]) {
    let b = p.nrows();
    let m = b * (b + 1) / 2;
    for _ in 0..3 {
        let near: Vec<usize> = (0..constraints.len())
            .filter(|&i| {
                let c = &constraints[i];
                c.h_sq - (&*p * &c.y).dot(&c.y) < 1e-4 * c.h_sq
            })
            .collect();
        if near.len() < b {
            return;
        }
        let Some(q) = p.clone().try_inverse() else { return };
        let sq = sqrt_pd(&q);
        let mut amat = DMatrix::zeros(m, near.len());
        for (col, &i) in near.iter().enumerate() {
            let y = &constraints[i].y;
            let py = &*p * y;
            let x = &py / py.dot(y).sqrt();
            let u = &sq * x;
            amat.set_column(col, &sym_to_vec(&(&u * u.transpose())));
        }
        let target = sym_to_vec(&DMatrix::identity(b, b));
        let c = nnls(&amat, &target, 300);
        let resid = (&amat * &c - &target).norm();
        let support: Vec<usize> = near
            .iter()
            .enumerate()
            .filter(|&(col, _)| c[col] > 1e-10)
            .map(|(_, &i)| i)
            .collect();
        let max_slack = support
            .iter()
            .map(|&i| {
                let cc = &constraints[i];
                (cc.h_sq - (&*p * &cc.y).dot(&cc.y)).abs() / cc.h_sq
            })
            .fold(0.0, f64::max);
        if resid < 1e-11 && max_slack < 1e-11 {
            return;
        }
        if support.len() < b {
            return;
        }
        match gauss_newton_kkt(p, constraints, &support) {
            Some((pw, nu, r)) => {
                let feasible = constraints
                    .iter()
                    .all(|cc| (&pw * &cc.y).dot(&cc.y) <= cc.h_sq * (1.0 + 1e-9));
                if r < 1e-10 && feasible && nu.iter().all(|&v| v > -1e-9) {
                    *p = pw;
                } else {
                    return;
                }
            }
            None => return,
        }
    }
}

/// One Gauss-Newton run on the fixed active set. Returns the refined P, the
/// multipliers, and the final residual norm.
fn gauss_newton_kkt(
    p: &DMatrix<f64>,
    constraints: &[Constraint],
    active: &[usize],
) -> Option<(DMatrix<f64>, Vec<f64>, f64)> {
    let b = p.nrows();
    let m = b * (b + 1) / 2;
    let k = active.len();
    let basis: Vec<DMatrix<f64>> = (0..m)
        .map(|kk| {
            let mut e = DVector::zeros(m);
            e[kk] = 1.0;
            vec_to_sym(&e, b)
        })
        .collect();

    let mut pw = p.clone();
    let p_inv = pw.clone().try_inverse()?;
    let mut amat = DMatrix::zeros(m, k);
    for (col, &i) in active.iter().enumerate() {
        let y = &constraints[i].y;
        amat.set_column(col, &sym_to_vec(&(y * y.transpose())));
    }
    let mut nu = nnls(&amat, &sym_to_vec(&p_inv), 200);

    let residual = |pw: &DMatrix<f64>, nu: &DVector<f64>| -> Option<DVector<f64>> {
        let p_inv = pw.clone().try_inverse()?;
        let mut res = DVector::zeros(m + k);
        let mut target = p_inv;
        for (col, &i) in active.iter().enumerate() {
            let y = &constraints[i].y;
            target -= nu[col] * y * y.transpose();
        }
        let r1 = sym_to_vec(&target);
        for i in 0..m {
            res[i] = r1[i];
        }
        for (col, &i) in active.iter().enumerate() {
            let c = &constraints[i];
            res[m + col] = ((pw * &c.y).dot(&c.y) - c.h_sq) / c.h_sq;
        }
        Some(res)
    };

    let mut res = residual(&pw, &nu)?;
    let mut best = (res.norm(), pw.clone(), nu.clone());
    for _ in 0..60 {
        if best.0 < 1e-14 {
            break;
        }
        let p_inv = pw.clone().try_inverse()?;
        let mut jac = DMatrix::zeros(m + k, m + k);
        for (kk, ek) in basis.iter().enumerate() {
            let d1 = -(&p_inv * ek * &p_inv);
            let col = sym_to_vec(&d1);
            for i in 0..m {
                jac[(i, kk)] = col[i];
            }
        }
        for (col, &i) in active.iter().enumerate() {
            let y = &constraints[i].y;
            let a = sym_to_vec(&(y * y.transpose()));
            for row in 0..m {
                jac[(row, m + col)] = -a[row];
            }
            for kk in 0..m {
                jac[(m + col, kk)] = a[kk] / constraints[i].h_sq;
            }
        }
        let delta = jac.svd(true, true).solve(&(-&res), 1e-14).ok()?;
        // backtracking on the residual norm
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let dp = vec_to_sym(&(t * delta.rows(0, m).into_owned()), b);
            let cand_p = &pw + &dp;
            if cand_p.clone().cholesky().is_some() {
                let mut cand_nu = nu.clone();
                for col in 0..k {
                    cand_nu[col] += t * delta[m + col];
                }
                if let Some(cand_res) = residual(&cand_p, &cand_nu) {
                    if cand_res.norm() < res.norm() * (1.0 - 1e-4 * t) {
                        pw = cand_p;
                        nu = cand_nu;
                        res = cand_res;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if res.norm() < best.0 {
            best = (res.norm(), pw.clone(), nu.clone());
        }
    }
    let nu_vec: Vec<f64> = best.2.iter().cloned().collect();
    Some((best.1, nu_vec, best.0))
}

/// Multi-start projected ascent on phi(y) = y'Py / h(y)^2; returns violated
/// directions (phi > 1).
fn find_violations(norm: &NormBody, p: &DMatrix<f64>, constraints: &[Constraint]) -> Vec<DVector<f64>> {
    let b = norm.dim();
    let mut seeds: Vec<DVector<f64>> = Vec::new();
    // near-active constraint directions and eigenvectors
    for c in constraints {
        let s = c.h_sq - (p * &c.y).dot(&c.y);
        if s < 0.05 * c.h_sq {
            seeds.push(c.y.clone());
        }
    }
    let eig = p.clone().symmetric_eigen();
    for j in 0..b {
        seeds.push(eig.eigenvectors.column(j).into_owned());
    }
    for (i, v) in norm.vertices().iter().enumerate() {
        if i % 1 == 0 {
            let n = v.norm();
            if n > 0.0 {
                seeds.push(v / n);
            }
        }
    }
    for i in 0..(64 * b as u64) {
        let h = halton_point(i ^ 0x5a5a, b);
        let v = DVector::from_iterator(b, h.into_iter().map(|x| 2.0 * x - 1.0));
        let n = v.norm();
        if n > 1e-3 {
            seeds.push(v / n);
        }
    }

    let mut found: Vec<DVector<f64>> = Vec::new();
    for seed in seeds {
        let y = ascend_ratio(norm, p, seed);
        let phi = ratio(norm, p, &y);
        if phi > 1.0 + 1e-11 {
            found.push(y);
        }
    }
    canonical_dedup(found, 1e-10)
}

fn ratio(norm: &NormBody, p: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let h = norm.support(y);
    if h <= 0.0 {
        return f64::INFINITY;
    }
    (p * y).dot(y) / (h * h)
}

fn ascend_ratio(norm: &NormBody, p: &DMatrix<f64>, mut y: DVector<f64>) -> DVector<f64> {
    let mut phi = ratio(norm, p, &y);
    let mut step = 0.1;
    for _ in 0..80 {
        let h = norm.support(&y);
        // signed maximizing vertex is the support gradient
        let mut grad_h = DVector::zeros(y.len());
        let mut best = f64::MIN;
        for v in norm.vertices() {
            let d = v.dot(&y);
            if d.abs() > best {
                best = d.abs();
                grad_h = if d >= 0.0 { v.clone() } else { -v.clone() };
            }
        }
        let py = p * &y;
        let g = 2.0 / (h * h) * &py - (2.0 * py.dot(&y) / (h * h * h)) * grad_h;
        let tangential = &g - g.dot(&y) * &y;
        if tangential.norm() < 1e-14 {
            break;
        }
        let mut advanced = false;
        for _ in 0..20 {
            let cand = (&y + step * &tangential).normalize();
            let cand_phi = ratio(norm, p, &cand);
            if cand_phi > phi + 1e-16 {
                y = cand;
                phi = cand_phi;
                advanced = true;
                step *= 1.6;
                break;
            }
            step *= 0.4;
        }
        if !advanced || step < 1e-14 {
            break;
        }
    }
    y
}

fn worst_ratio(norm: &NormBody, p: &DMatrix<f64>) -> f64 {
    let empty: Vec<Constraint> = Vec::new();
    let viol = find_violations(norm, p, &empty);
    let mut worst: f64 = 0.0;
    for y in &viol {
        worst = worst.max(ratio(norm, p, y));
    }
    for y in seed_directions(norm.dim(), norm.vertices()) {
        worst = worst.max(ratio(norm, p, &y));
    }
    worst
}

// ---------------------------------------------------------------------------
// rank-1 decomposition
// ---------------------------------------------------------------------------

/// Decompose the John quadratic form into rank-1 forms built from contact
/// points, then Caratheodory-reduce to at most b(b+1)/2 terms.
pub fn rank1_decomposition(norm: &NormBody, ellipsoid: &Ellipsoid) -> Result<Rank1Decomposition> {
    let b = norm.dim();
    let q = &ellipsoid.q;

    if let NormRep::Ellipsoid { q: qn } = norm.rep() {
        if (qn - q).amax() > 1e-8 * q.amax().max(1.0) {
            return Err(Error::DegenerateContact { found: 0, needed: b });
        }
        // every direction touches; use the eigenframe
        let eig = q.clone().symmetric_eigen();
        let mut weights = Vec::with_capacity(b);
        let mut functionals = Vec::with_capacity(b);
        let sqrt_q = sqrt_pd(q);
        for j in 0..b {
            let mut e = eig.eigenvectors.column(j).into_owned();
            if let Some(first) = e.iter().find(|&&x| x.abs() > 1e-13) {
                if *first < 0.0 {
                    e = -e;
                }
            }
            weights.push(1.0);
            functionals.push(&sqrt_q * e);
        }
        return Ok(Rank1Decomposition { weights, functionals, warning: None });
    }

    let p = q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("ellipsoid form is singular".into()))?;

    // contact directions: facet normals whose inscription constraint is
    // active; fall back to ratio ascent when facets cannot be enumerated
    let mut contact_dirs: Vec<DVector<f64>> = Vec::new();
    match enumerate_facets(norm.vertices(), b) {
        Some(facets) if facets.len() >= b => {
            // generous threshold: the certificate fit zeroes out spurious
            // near-contacts on its own
            for a in facets {
                let r = (&p * &a).dot(&a); // support^2 of E against facet at distance 1
                if r > 1.0 - 1e-4 {
                    contact_dirs.push(a.normalize());
                }
            }
        }
        _ => {
            let mut seeds = seed_directions(b, norm.vertices());
            let eigp = p.clone().symmetric_eigen();
            for j in 0..b {
                seeds.push(eigp.eigenvectors.column(j).into_owned());
            }
            for s in seeds {
                let y = ascend_ratio(norm, &p, s);
                let phi = ratio(norm, &p, &y);
                if phi > 1.0 - 1e-7 {
                    contact_dirs.push(y);
                }
            }
        }
    }
    let contact_dirs = canonical_dedup(contact_dirs, 1e-8);
    if contact_dirs.len() < b {
        return Err(Error::DegenerateContact { found: contact_dirs.len(), needed: b });
    }

    let sqrt_q = sqrt_pd(q);
    // x = Py/sqrt(y'Py) on the ellipsoid boundary; u = Q^{1/2} x is unit in
    // the whitened frame
    let mut contacts: Vec<DVector<f64>> = contact_dirs
        .iter()
        .map(|y| {
            let py = &p * y;
            let x = &py / (py.dot(y)).sqrt();
            let mut u = &sqrt_q * x;
            if let Some(first) = u.iter().find(|&&t| t.abs() > 1e-13) {
                if *first < 0.0 {
                    u = -u;
                }
            }
            u
        })
        .collect();
    contacts.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    // weights: identity in the cone of contact rank-1 forms; contacts whose
    // functional misses unit dual norm are evicted and the fit is redone
    let m = b * (b + 1) / 2;
    let target = sym_to_vec(&DMatrix::identity(b, b));
    let mut pool = contacts;
    let mut support: Vec<(DVector<f64>, f64)>;
    loop {
        let k = pool.len();
        if k < b {
            return Err(Error::DegenerateContact { found: k, needed: b });
        }
        let mut amat = DMatrix::zeros(m, k);
        for (col, u) in pool.iter().enumerate() {
            amat.set_column(col, &sym_to_vec(&(u * u.transpose())));
        }
        let c = nnls(&amat, &target, 400);
        // in the whitened frame the certificate residual *is* the relative
        // reconstruction error, so gate directly on the required tolerance
        let resid = (&amat * &c - &target).norm();
        if resid > 0.5 * tol::RANK1_RECONSTRUCTION_TOL * (b as f64).sqrt() {
            return Err(Error::Convergence {
                what: "John optimality certificate (identity not in contact cone)".into(),
                residual: resid,
            });
        }
        support = pool
            .iter()
            .cloned()
            .zip(c.iter().cloned())
            .filter(|(_, w)| *w > 1e-10)
            .collect();
        // each supported functional must sit on the dual sphere
        let mut worst = (0.0_f64, usize::MAX);
        for (i, (u, _)) in support.iter().enumerate() {
            let l = &sqrt_q * u;
            let err = (norm.support(&l) - 1.0).abs();
            if err > worst.0 {
                worst = (err, i);
            }
        }
        if worst.0 <= 0.5 * tol::RANK1_DUAL_NORM_TOL {
            break;
        }
        let bad = &support[worst.1].0;
        let before = pool.len();
        pool.retain(|u| (u - bad).amax() > 1e-12);
        if pool.len() == before {
            break; // nothing removed; give up and let the caller's checks run
        }
    }
    let mut warning = None;
    while support.len() > m {
        let kk = support.len();
        let mut a = DMatrix::zeros(m + 1, kk);
        for (col, (u, _)) in support.iter().enumerate() {
            let s = sym_to_vec(&(u * u.transpose()));
            for row in 0..m {
                a[(row, col)] = s[row];
            }
            a[(m, col)] = 1.0;
        }
        let svd = a.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested");
        let smin = svd.singular_values[svd.singular_values.len() - 1];
        if smin > 1e-10 {
            warning = Some(format!(
                "Caratheodory pivoting stalled at {} terms (target {}); keeping the extra term",
                kk, m
            ));
            break;
        }
        let mut mu: DVector<f64> = v_t.row(v_t.nrows() - 1).transpose();
        if mu.iter().all(|&x| x >= -1e-15) {
            mu = -mu;
        }
        let mut t_star = f64::MAX;
        let mut drop_idx = None;
        for (i, (_, w)) in support.iter().enumerate() {
            if mu[i] < -1e-15 {
                let t = -w / mu[i];
                if t < t_star {
                    t_star = t;
                    drop_idx = Some(i);
                }
            }
        }
        let Some(drop_idx) = drop_idx else {
            warning = Some("Caratheodory pivoting found no negative direction; keeping extra terms".into());
            break;
        };
        for (i, (_, w)) in support.iter_mut().enumerate() {
            *w += t_star * mu[i];
        }
        support.remove(drop_idx);
        support.retain(|(_, w)| *w > 1e-12);
    }

    // map whitened contacts to functionals: L = Q^{1/2} u has unit dual norm
    let mut weights = Vec::with_capacity(support.len());
    let mut functionals = Vec::with_capacity(support.len());
    for (u, w) in support {
        weights.push(w);
        functionals.push(&sqrt_q * u);
    }
    Ok(Rank1Decomposition { weights, functionals, warning })
}

/// Symmetric PD square root via the eigendecomposition.
pub fn sqrt_pd(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = q.clone().symmetric_eigen();
    let b = q.nrows();
    let mut d = DMatrix::zeros(b, b);
    for i in 0..b {
        d[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
    }
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// The map L(x) = (sqrt(lambda_1) L_1(x), ..., sqrt(lambda_N) L_N(x)),
/// an isometry from (V, ||.||_E) into R^N.
pub fn isometry_embedding(decomp: &Rank1Decomposition) -> DMatrix<f64> {
    let n = decomp.count();
    let b = decomp.functionals.first().map(|l| l.len()).unwrap_or(0);
    let mut mat = DMatrix::zeros(n, b);
    for (i, (w, l)) in decomp.weights.iter().zip(&decomp.functionals).enumerate() {
        mat.set_row(i, &(w.sqrt() * l.transpose()));
    }
    mat
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square_norm() -> NormBody {
        let verts = vec![
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-1.0, 1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        ];
        NormBody::polytope(2, verts).unwrap()
    }

    fn hexagon_norm() -> NormBody {
        let verts = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect();
        NormBody::polytope(2, verts).unwrap()
    }

    #[test]
    fn dual_norm_examples() {
        let eucl = NormBody::ellipsoidal(DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(dual_norm(&eucl, &DVector::from_vec(vec![3.0, 4.0])).unwrap(), 5.0, epsilon = 1e-12);

        let sq = square_norm();
        assert_relative_eq!(dual_norm(&sq, &DVector::from_vec(vec![1.0, 1.0])).unwrap(), 2.0, epsilon = 1e-12);

        let hexagon = hexagon_norm();
        assert_relative_eq!(dual_norm(&hexagon, &DVector::from_vec(vec![1.0, 0.0])).unwrap(), 1.0, epsilon = 1e-12);

        assert_eq!(dual_norm(&sq, &DVector::from_vec(vec![0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn john_of_square_is_unit_disk() {
        let e = john_ellipsoid(&square_norm()).unwrap();
        assert_relative_eq!(e.q[(0, 0)], 1.0, epsilon = 1e-7);
        assert_relative_eq!(e.q[(1, 1)], 1.0, epsilon = 1e-7);
        assert!(e.q[(0, 1)].abs() < 1e-7);
    }

    #[test]
    fn john_of_ball_is_itself() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let body = NormBody::ellipsoidal(q.clone()).unwrap();
        let e = john_ellipsoid(&body).unwrap();
        assert!((e.q - q).amax() < 1e-14);
    }

    #[test]
    fn john_of_hexagon_is_inscribed_disk() {
        // inradius sqrt(3)/2, so Q = (4/3) I
        let e = john_ellipsoid(&hexagon_norm()).unwrap();
        assert_relative_eq!(e.q[(0, 0)], 4.0 / 3.0, epsilon = 1e-6);
        assert_relative_eq!(e.q[(1, 1)], 4.0 / 3.0, epsilon = 1e-6);
        assert!(e.q[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn decomposition_of_square() {
        let norm = square_norm();
        let e = john_ellipsoid(&norm).unwrap();
        let d = rank1_decomposition(&norm, &e).unwrap();
        assert_eq!(d.count(), 2);
        let total: f64 = d.weights.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-8);
        let recon = d.reconstruct(2);
        assert!((recon - &e.q).amax() < 1e-7);
        for l in &d.functionals {
            assert_relative_eq!(dual_norm(&norm, l).unwrap(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn decomposition_of_hexagon() {
        let norm = hexagon_norm();
        let e = john_ellipsoid(&norm).unwrap();
        let d = rank1_decomposition(&norm, &e).unwrap();
        assert_eq!(d.count(), 3);
        let total: f64 = d.weights.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-8);
        for w in &d.weights {
            assert_relative_eq!(*w, 2.0 / 3.0, epsilon = 1e-6);
        }
        let recon = d.reconstruct(2);
        assert!((recon - &e.q).amax() < 1e-7);
        for l in &d.functionals {
            assert_relative_eq!(dual_norm(&norm, l).unwrap(), 1.0, epsilon = 1e-6);
            assert_relative_eq!(l.norm(), (4.0f64 / 3.0).sqrt(), epsilon = 1e-5);
        }
    }

    #[test]
    fn decomposition_of_euclidean_ball() {
        let body = NormBody::ellipsoidal(DMatrix::identity(2, 2)).unwrap();
        let e = john_ellipsoid(&body).unwrap();
        let d = rank1_decomposition(&body, &e).unwrap();
        assert_eq!(d.count(), 2);
        assert_relative_eq!(d.weights[0], 1.0, epsilon = 1e-12);
        let recon = d.reconstruct(2);
        assert!((recon - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn isometry_embedding_matches_quadratic_form() {
        let norm = hexagon_norm();
        let e = john_ellipsoid(&norm).unwrap();
        let d = rank1_decomposition(&norm, &e).unwrap();
        let l = isometry_embedding(&d);
        // |L x|^2 = x'Qx on a few vectors, including 0
        for x in [
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.3, -0.7]),
            DVector::from_vec(vec![-2.0, 1.5]),
        ] {
            let lhs = (&l * &x).norm_squared();
            let rhs = (&e.q * &x).dot(&x);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn sampled_norm_reports_discretization() {
        let dirs: Vec<DVector<f64>> = (0..64)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 64.0;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect();
        let values: Vec<f64> = dirs.iter().map(|d| d.amax()).collect(); // l-infinity norm samples
        let body = NormBody::from_samples(2, dirs, values).unwrap();
        assert!(body.discretization_note.is_some());
        let e = john_ellipsoid(&body).unwrap();
        // the sampled l-inf ball's inscribed disk has radius close to 1
        assert_relative_eq!(e.q[(0, 0)], 1.0, epsilon = 2e-2);
    }

    #[test]
    fn asymmetric_polytope_rejected() {
        let verts = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        assert!(matches!(NormBody::polytope(2, verts), Err(Error::InvalidNorm(_))));
    }

    #[test]
    fn norm_json_roundtrip() {
        let norm = hexagon_norm();
        let s = norm.to_json_string();
        let back = NormBody::from_json_str(&s).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.vertices().len(), 6);
    }
}
