//! Oriented simplicial closed manifolds of dimension 2 and 3 carrying a
//! piecewise-flat metric given by edge lengths, plus 1-cochains (discrete
//! 1-forms) with a pointwise norm per top simplex.
//!
//! Small refinements of the torus constructions are delta complexes rather
//! than simplicial complexes (k = 1 has loop edges), so edges are first-class
//! objects with identities of their own and every simplex stores its edge
//! ids together with orientation signs.

mod flat_torus;
pub mod homology;

pub use flat_torus::flat_torus_mesh;
pub use homology::HomologyData;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Canonical local edge order for a d-simplex: pairs (a, b) with a < b in
/// lexicographic order. The first d pairs are the spanning edges (0, a).
pub fn local_edge_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..=dim {
        for b in a + 1..=dim {
            pairs.push((a, b));
        }
    }
    // reorder so spanning edges (0, a) come first
    pairs.sort_by_key(|&(a, b)| (a != 0, a, b));
    pairs
}

#[derive(Clone, Debug)]
pub struct Simplex {
    /// Vertex ids, positively oriented.
    pub vertices: Vec<usize>,
    /// Edge ids with signs, in [local_edge_pairs] order; the sign is +1 when
    /// the stored edge direction agrees with low-to-high local traversal.
    pub edges: Vec<(usize, i8)>,
}

#[derive(Clone, Debug)]
pub(crate) struct SimplexGeometry {
    /// Inverse Gram matrix of the spanning edge vectors.
    pub minv: DMatrix<f64>,
    pub volume: f64,
    /// Rows map local-edge cochain values to the Whitney covector at the
    /// barycenter (after the 1/(d+1) factor).
    pub whitney: DMatrix<f64>,
}

/// An oriented 2-simplex of a 3-mesh (or a top triangle of a 2-mesh),
/// described by its edges in canonical local order.
#[derive(Clone, Debug)]
pub struct Face2 {
    pub edges: [(usize, i8); 3],
}

#[derive(Debug)]
pub struct Mesh {
    pub dim: usize,
    pub num_vertices: usize,
    edges: Vec<(usize, usize)>,
    edge_lengths: Vec<f64>,
    simplices: Vec<Simplex>,
    geometry: Vec<SimplexGeometry>,
    /// All 2-simplices (equals the top simplices when dim = 2).
    faces2: Vec<Face2>,
    total_volume: f64,
    id: u64,
    homology: OnceLock<std::result::Result<HomologyData, String>>,
}

/// A discrete 1-form: one real value per oriented edge of a fixed mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Form {
    pub values: Vec<f64>,
    mesh_id: u64,
}

impl Form {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_edges() {
            return Err(Error::InvalidForm(format!(
                "form has {} values but the mesh has {} edges",
                values.len(),
                mesh.num_edges()
            )));
        }
        Ok(Form { values, mesh_id: mesh.id })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Form { values: vec![0.0; mesh.num_edges()], mesh_id: mesh.id }
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id {
            return Err(Error::InvalidForm("form belongs to a different mesh".into()));
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Form {
        Form { values: self.values.iter().map(|v| c * v).collect(), mesh_id: self.mesh_id }
    }

    pub fn add(&self, other: &Form) -> Form {
        debug_assert_eq!(self.mesh_id, other.mesh_id);
        Form {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            mesh_id: self.mesh_id,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MeshJson {
    dim: usize,
    simplices: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_lengths: Option<BTreeMap<String, f64>>,
    // extended delta-complex fields for meshes with loop or parallel edges
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_lengths_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simplex_edges: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simplex_edge_signs: Option<Vec<Vec<i8>>>,
}

impl Mesh {
    /// Full delta-complex constructor; every simplex lists its edge ids in
    /// canonical local order.
    pub fn from_parts(
        dim: usize,
        num_vertices: usize,
        edges: Vec<(usize, usize)>,
        edge_lengths: Vec<f64>,
        simplices: Vec<Simplex>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension { dim, reason: "meshes are 2- or 3-dimensional".into() });
        }
        if edges.len() != edge_lengths.len() {
            return Err(Error::InvalidMesh("edge/length count mismatch".into()));
        }
        if edge_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidMetric("edge lengths must be positive and finite".into()));
        }
        let pairs = local_edge_pairs(dim);
        for s in &simplices {
            if s.vertices.len() != dim + 1 || s.edges.len() != pairs.len() {
                return Err(Error::InvalidMesh("simplex with wrong vertex or edge count".into()));
            }
            for (&(eid, sign), &(a, b)) in s.edges.iter().zip(&pairs) {
                if eid >= edges.len() || sign.abs() != 1 {
                    return Err(Error::InvalidMesh("simplex references a bad edge".into()));
                }
                let (u, v) = edges[eid];
                let (x, y) = (s.vertices[a], s.vertices[b]);
                let ok = if sign == 1 { (u, v) == (x, y) } else { (u, v) == (y, x) };
                if !ok {
                    return Err(Error::InvalidMesh("simplex edge endpoints do not match its vertices".into()));
                }
            }
        }

        let geometry = build_geometry(dim, &edge_lengths, &simplices)?;
        let total_volume = geometry.iter().map(|g| g.volume).sum();
        let faces2 = build_faces2(dim, &simplices)?;
        let mesh = Mesh {
            dim,
            num_vertices,
            edges,
            edge_lengths,
            simplices,
            geometry,
            faces2,
            total_volume,
            id: MESH_ID.fetch_add(1, Ordering::Relaxed),
            homology: OnceLock::new(),
        };
        mesh.check_closed()?;
        Ok(mesh)
    }

    /// Simplicial-complex constructor: edges derived from vertex pairs.
    pub fn from_simplices(
        dim: usize,
        simplices: Vec<Vec<usize>>,
        edge_lengths: &BTreeMap<(usize, usize), f64>,
    ) -> Result<Self> {
        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut lengths = Vec::new();
        for (&(u, v), &l) in edge_lengths {
            if u == v {
                return Err(Error::InvalidMesh("loop edges need the delta-complex constructor".into()));
            }
            let key = (u.min(v), u.max(v));
            if edge_ids.insert(key, edges.len()).is_some() {
                return Err(Error::InvalidMesh("duplicate edge".into()));
            }
            edges.push(key);
            lengths.push(l);
        }
        let pairs = local_edge_pairs(dim);
        let num_vertices = simplices.iter().flatten().copied().max().map_or(0, |m| m + 1);
        let mut full = Vec::with_capacity(simplices.len());
        for verts in simplices {
            if verts.len() != dim + 1 {
                return Err(Error::InvalidMesh("simplex with wrong vertex count".into()));
            }
            let mut se = Vec::with_capacity(pairs.len());
            for &(a, b) in &pairs {
                let (x, y) = (verts[a], verts[b]);
                let key = (x.min(y), x.max(y));
                let eid = *edge_ids
                    .get(&key)
                    .ok_or_else(|| Error::InvalidMesh(format!("missing edge length for {key:?}")))?;
                let sign = if edges[eid] == (x, y) { 1 } else { -1 };
                se.push((eid, sign));
            }
            full.push(Simplex { vertices: verts, edges: se });
        }
        Mesh::from_parts(dim, num_vertices, edges, lengths, full)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn faces2(&self) -> &[Face2] {
        &self.faces2
    }

    pub fn volume(&self) -> f64 {
        self.total_volume
    }

    pub fn simplex_volume(&self, idx: usize) -> f64 {
        self.geometry[idx].volume
    }

    pub(crate) fn simplex_minv(&self, idx: usize) -> &DMatrix<f64> {
        &self.geometry[idx].minv
    }

    /// Euler characteristic of the complex (uses all 2-simplices in dim 3).
    pub fn euler_characteristic(&self) -> i64 {
        let v = self.num_vertices as i64;
        let e = self.edges.len() as i64;
        match self.dim {
            2 => v - e + self.simplices.len() as i64,
            _ => v - e + self.faces2.len() as i64 - self.simplices.len() as i64,
        }
    }

    /// Every codim-1 face must appear in exactly two top simplices with
    /// opposite induced orientations.
    fn check_closed(&self) -> Result<()> {
        match self.dim {
            2 => {
                let mut inc: Vec<(i64, usize)> = vec![(0, 0); self.edges.len()];
                for s in &self.simplices {
                    // boundary of (v0,v1,v2) = e12 - e02 + e01
                    let coeffs = [1i64, -1, 1]; // order (0,1), (0,2), (1,2)
                    for (k, &(eid, sign)) in s.edges.iter().enumerate() {
                        inc[eid].0 += coeffs[k] * sign as i64;
                        inc[eid].1 += 1;
                    }
                }
                for (e, &(sum, count)) in inc.iter().enumerate() {
                    if sum != 0 || count != 2 {
                        return Err(Error::InvalidMesh(format!(
                            "edge {e} is not shared by two coherently oriented triangles"
                        )));
                    }
                }
            }
            _ => {
                let d3 = self.boundary3_columns()?;
                let mut inc: Vec<(i64, usize)> = vec![(0, 0); self.faces2.len()];
                for col in &d3 {
                    for &(face, coeff) in col {
                        inc[face].0 += coeff;
                        inc[face].1 += 1;
                    }
                }
                for (f, &(sum, count)) in inc.iter().enumerate() {
                    if sum != 0 || count != 2 {
                        return Err(Error::InvalidMesh(format!(
                            "face {f} is not shared by two coherently oriented tetrahedra"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Boundary operator d1: edges -> vertices as signed columns.
    pub fn boundary1_columns(&self) -> Vec<Vec<(usize, i64)>> {
        self.edges
            .iter()
            .map(|&(u, v)| {
                if u == v {
                    Vec::new()
                } else {
                    vec![(u, -1), (v, 1)]
                }
            })
            .collect()
    }

    /// Boundary operator d2: 2-simplices -> edges as signed columns.
    pub fn boundary2_columns(&self) -> Vec<Vec<(usize, i64)>> {
        let coeffs = [1i64, -1, 1];
        self.faces2
            .iter()
            .map(|f| {
                let mut col: BTreeMap<usize, i64> = BTreeMap::new();
                for (k, &(eid, sign)) in f.edges.iter().enumerate() {
                    *col.entry(eid).or_insert(0) += coeffs[k] * sign as i64;
                }
                col.into_iter().filter(|&(_, c)| c != 0).collect()
            })
            .collect()
    }

    /// Boundary operator d3: tetrahedra -> 2-simplices (dim 3 only).
    pub fn boundary3_columns(&self) -> Result<Vec<Vec<(usize, i64)>>> {
        if self.dim != 3 {
            return Err(Error::UnsupportedDimension { dim: self.dim, reason: "d3 needs a 3-mesh".into() });
        }
        let pairs = local_edge_pairs(3);
        let pair_index = |a: usize, b: usize| pairs.iter().position(|&p| p == (a.min(b), a.max(b))).unwrap();
        let face_key = |edges: &[(usize, i8); 3]| -> [usize; 3] {
            let mut ids = [edges[0].0, edges[1].0, edges[2].0];
            ids.sort_unstable();
            ids
        };
        let mut index: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        for (i, f) in self.faces2.iter().enumerate() {
            index.insert(face_key(&f.edges), i);
        }
        let mut cols = Vec::with_capacity(self.simplices.len());
        for s in &self.simplices {
            let mut col = Vec::with_capacity(4);
            for omit in 0..4 {
                let mut local: Vec<usize> = (0..4).filter(|&x| x != omit).collect();
                // induced orientation sign (-1)^omit
                let mut sign = if omit % 2 == 0 { 1i64 } else { -1 };
                // face edges in the face's own canonical order
                let face_edges = [
                    s.edges[pair_index(local[0], local[1])],
                    s.edges[pair_index(local[0], local[2])],
                    s.edges[pair_index(local[1], local[2])],
                ];
                // adjust signs for traversal direction within the face
                let adjust = |(eid, sg): (usize, i8), lo: usize, hi: usize| -> (usize, i8) {
                    if lo < hi {
                        (eid, sg)
                    } else {
                        (eid, -sg)
                    }
                };
                let fe = [
                    adjust(face_edges[0], local[0], local[1]),
                    adjust(face_edges[1], local[0], local[2]),
                    adjust(face_edges[2], local[1], local[2]),
                ];
                let key = face_key(&fe);
                let face_idx = *index
                    .get(&key)
                    .ok_or_else(|| Error::Internal("tetrahedron face missing from face table".into()))?;
                // relative orientation against the stored canonical face:
                // match vertices through their opposite edges
                let canon = &self.faces2[face_idx];
                let perm_parity = face_permutation_parity(&fe, &canon.edges)?;
                sign *= perm_parity;
                // also compare edge direction signs once matched
                local.rotate_left(0);
                col.push((face_idx, sign));
            }
            cols.push(col);
        }
        Ok(cols)
    }

    /// Coboundary of a 1-form evaluated on every 2-simplex.
    pub fn coboundary(&self, form: &Form) -> Result<Vec<f64>> {
        form.check_mesh(self)?;
        let coeffs = [1.0, -1.0, 1.0];
        Ok(self
            .faces2
            .iter()
            .map(|f| {
                f.edges
                    .iter()
                    .enumerate()
                    .map(|(k, &(eid, sign))| coeffs[k] * sign as f64 * form.values[eid])
                    .sum()
            })
            .collect())
    }

    pub fn coboundary_residual(&self, form: &Form) -> Result<f64> {
        let d = self.coboundary(form)?;
        Ok(d.iter().fold(0.0, |m, &x| m.max(x.abs())))
    }

    /// Signed cochain values on the d spanning local edges of a simplex;
    /// equals the covector components of any closed form there.
    pub fn spanning_components(&self, simplex: usize, form: &Form) -> DVector<f64> {
        let s = &self.simplices[simplex];
        DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|a| {
                let (eid, sign) = s.edges[a];
                sign as f64 * form.values[eid]
            }),
        )
    }

    /// Whitney covector (at the barycenter) of an arbitrary 1-cochain.
    pub fn whitney_components(&self, simplex: usize, form: &Form) -> DVector<f64> {
        let s = &self.simplices[simplex];
        let g = &self.geometry[simplex];
        let local = DVector::from_iterator(
            s.edges.len(),
            s.edges.iter().map(|&(eid, sign)| sign as f64 * form.values[eid]),
        );
        (g.whitney.transpose() * local) / (self.dim as f64 + 1.0)
    }

    /// Pointwise norm of the covector with the given components.
    pub fn covector_norm_sq(&self, simplex: usize, comps: &DVector<f64>) -> f64 {
        (self.geometry[simplex].minv.clone() * comps).dot(comps).max(0.0)
    }

    /// Pointwise norm field of a 1-form, one value per top simplex.
    pub fn norm_field(&self, form: &Form) -> Result<Vec<f64>> {
        form.check_mesh(self)?;
        Ok((0..self.simplices.len())
            .map(|i| {
                let w = self.whitney_components(i, form);
                self.covector_norm_sq(i, &w).sqrt()
            })
            .collect())
    }

    /// Integral of |form|^p over the mesh (piecewise-constant norm field).
    pub fn lp_energy(&self, form: &Form, p: f64) -> Result<f64> {
        form.check_mesh(self)?;
        let mut total = 0.0;
        for i in 0..self.simplices.len() {
            let w = self.whitney_components(i, form);
            total += self.geometry[i].volume * self.covector_norm_sq(i, &w).powf(p / 2.0);
        }
        Ok(total)
    }

    /// Pairing of a 1-form with an integer edge chain.
    pub fn pair_with_chain(&self, form: &Form, chain: &[(usize, i64)]) -> f64 {
        chain.iter().map(|&(eid, c)| c as f64 * form.values[eid]).sum()
    }

    /// Rescale every edge length by the same factor.
    pub fn scaled(&self, factor: f64) -> Result<Mesh> {
        if !(factor > 0.0) {
            return Err(Error::InvalidInput("scale factor must be positive".into()));
        }
        let mesh = Mesh::from_parts(
            self.dim,
            self.num_vertices,
            self.edges.clone(),
            self.edge_lengths.iter().map(|l| l * factor).collect(),
            self.simplices.clone(),
        )?;
        self.copy_homology_to(&mesh);
        Ok(mesh)
    }

    /// Rescale so the total volume is one.
    pub fn normalized_volume(&self) -> Result<Mesh> {
        let v = self.volume();
        if !(v > 0.0) {
            return Err(Error::InvalidMetric("mesh volume must be positive".into()));
        }
        self.scaled(v.powf(-1.0 / self.dim as f64))
    }

    /// Discrete conformal change: every edge length is multiplied by the
    /// geometric mean of its endpoint factors. Topology is unchanged.
    pub fn conformal_scale(&self, factors: &[f64]) -> Result<Mesh> {
        if factors.len() != self.num_vertices {
            return Err(Error::InvalidInput("one conformal factor per vertex required".into()));
        }
        if factors.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::InvalidInput("conformal factors must be positive".into()));
        }
        let lengths: Vec<f64> = self
            .edges
            .iter()
            .zip(&self.edge_lengths)
            .map(|(&(u, v), &l)| (factors[u] * factors[v]).sqrt() * l)
            .collect();
        let mesh = Mesh::from_parts(
            self.dim,
            self.num_vertices,
            self.edges.clone(),
            lengths,
            self.simplices.clone(),
        )?;
        self.copy_homology_to(&mesh);
        Ok(mesh)
    }

    fn copy_homology_to(&self, other: &Mesh) {
        if let Some(Ok(h)) = self.homology.get() {
            let _ = other.homology.set(Ok(h.clone()));
        }
    }

    pub(crate) fn set_homology(&self, data: HomologyData) {
        let _ = self.homology.set(Ok(data));
    }

    /// Integral homology/cohomology bases with identity pairing; computed by
    /// Smith normal form on demand, or installed by the torus constructors.
    pub fn homology_basis(&self) -> Result<&HomologyData> {
        let entry = self
            .homology
            .get_or_init(|| homology::compute_homology(self).map_err(|e| e.to_string()));
        match entry {
            Ok(h) => Ok(h),
            Err(msg) => Err(Error::InvalidMesh(format!("homology computation failed: {msg}"))),
        }
    }

    pub fn to_json_string(&self) -> String {
        let simple = self.is_simple_complex();
        let json = if simple {
            let mut map = BTreeMap::new();
            for (&(u, v), &l) in self.edges.iter().zip(&self.edge_lengths) {
                map.insert(format!("{u}-{v}"), l);
            }
            MeshJson {
                dim: self.dim,
                simplices: self.simplices.iter().map(|s| s.vertices.clone()).collect(),
                edge_lengths: Some(map),
                edges: None,
                edge_lengths_list: None,
                simplex_edges: None,
                simplex_edge_signs: None,
            }
        } else {
            MeshJson {
                dim: self.dim,
                simplices: self.simplices.iter().map(|s| s.vertices.clone()).collect(),
                edge_lengths: None,
                edges: Some(self.edges.clone()),
                edge_lengths_list: Some(self.edge_lengths.clone()),
                simplex_edges: Some(
                    self.simplices
                        .iter()
                        .map(|s| s.edges.iter().map(|&(e, _)| e).collect())
                        .collect(),
                ),
                simplex_edge_signs: Some(
                    self.simplices
                        .iter()
                        .map(|s| s.edges.iter().map(|&(_, sg)| sg).collect())
                        .collect(),
                ),
            }
        };
        serde_json::to_string_pretty(&json).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: MeshJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("mesh json: {e}")))?;
        if let (Some(edges), Some(lengths), Some(se), Some(signs)) = (
            parsed.edges.clone(),
            parsed.edge_lengths_list.clone(),
            parsed.simplex_edges.clone(),
            parsed.simplex_edge_signs.clone(),
        ) {
            let num_vertices = parsed.simplices.iter().flatten().copied().max().map_or(0, |m| m + 1);
            let simplices = parsed
                .simplices
                .into_iter()
                .zip(se.into_iter().zip(signs))
                .map(|(vertices, (eids, sgns))| Simplex {
                    vertices,
                    edges: eids.into_iter().zip(sgns).collect(),
                })
                .collect();
            return Mesh::from_parts(parsed.dim, num_vertices, edges, lengths, simplices);
        }
        let lengths = parsed
            .edge_lengths
            .ok_or_else(|| Error::InvalidInput("mesh json missing edge lengths".into()))?;
        let mut map = BTreeMap::new();
        for (key, l) in lengths {
            let parts: Vec<&str> = key.split('-').collect();
            if parts.len() != 2 {
                return Err(Error::InvalidInput(format!("bad edge key '{key}'")));
            }
            let u: usize = parts[0].parse().map_err(|_| Error::InvalidInput(format!("bad edge key '{key}'")))?;
            let v: usize = parts[1].parse().map_err(|_| Error::InvalidInput(format!("bad edge key '{key}'")))?;
            map.insert((u.min(v), u.max(v)), l);
        }
        Mesh::from_simplices(parsed.dim, parsed.simplices, &map)
    }

    fn is_simple_complex(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        for &(u, v) in &self.edges {
            if u == v || !seen.insert((u.min(v), u.max(v))) {
                return false;
            }
        }
        true
    }
}

/// Relative orientation (+1/-1) between two orderings of the same triangle,
/// matched through the edge opposite each vertex (robust under repeated
/// vertex ids in delta complexes).
fn face_permutation_parity(a: &[(usize, i8); 3], b: &[(usize, i8); 3]) -> Result<i64> {
    // in canonical order (01, 02, 12): vertex 0 is opposite edge 12 etc.
    let opp = |edges: &[(usize, i8); 3]| [edges[2].0, edges[1].0, edges[0].0];
    let oa = opp(a);
    let ob = opp(b);
    let mut perm = [usize::MAX; 3];
    for i in 0..3 {
        for j in 0..3 {
            if oa[i] == ob[j] && !perm.contains(&j) {
                perm[i] = j;
                break;
            }
        }
    }
    if perm.contains(&usize::MAX) {
        return Err(Error::Internal("faces do not share their edge set".into()));
    }
    let mut parity = 1i64;
    for i in 0..3 {
        for j in i + 1..3 {
            if perm[i] > perm[j] {
                parity = -parity;
            }
        }
    }
    Ok(parity)
}

fn build_geometry(dim: usize, edge_lengths: &[f64], simplices: &[Simplex]) -> Result<Vec<SimplexGeometry>> {
    let pairs = local_edge_pairs(dim);
    let factorial = (1..=dim).product::<usize>() as f64;
    let mut out = Vec::with_capacity(simplices.len());
    for s in simplices {
        // squared length of each local edge
        let mut lsq = vec![0.0; pairs.len()];
        for (k, &(eid, _)) in s.edges.iter().enumerate() {
            lsq[k] = edge_lengths[eid] * edge_lengths[eid];
        }
        let idx = |a: usize, b: usize| pairs.iter().position(|&p| p == (a.min(b), a.max(b))).unwrap();
        let mut m = DMatrix::zeros(dim, dim);
        for a in 1..=dim {
            for b in 1..=dim {
                let val = if a == b {
                    lsq[idx(0, a)]
                } else {
                    0.5 * (lsq[idx(0, a)] + lsq[idx(0, b)] - lsq[idx(a, b)])
                };
                m[(a - 1, b - 1)] = val;
            }
        }
        let det = m.determinant();
        let scale = lsq.iter().cloned().fold(0.0, f64::max);
        if !(det > 1e-14 * scale.powi(dim as i32)) {
            return Err(Error::InvalidMetric(
                "degenerate simplex: edge lengths violate the simplex inequality".into(),
            ));
        }
        let minv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMetric("simplex Gram matrix is singular".into()))?;
        let volume = det.sqrt() / factorial;

        // Whitney rows: d(phi_b) - d(phi_a) in spanning-edge covector coords
        let mut whitney = DMatrix::zeros(pairs.len(), dim);
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let dphi = |j: usize, comp: usize| -> f64 {
                if j == 0 {
                    -1.0
                } else if j == comp + 1 {
                    1.0
                } else {
                    0.0
                }
            };
            for comp in 0..dim {
                whitney[(k, comp)] = dphi(b, comp) - dphi(a, comp);
            }
        }
        out.push(SimplexGeometry { minv, volume, whitney });
    }
    Ok(out)
}

/// Collect all 2-simplices. For dim 2 these are the top simplices themselves;
/// for dim 3 the deduplicated triangular faces of the tetrahedra.
fn build_faces2(dim: usize, simplices: &[Simplex]) -> Result<Vec<Face2>> {
    if dim == 2 {
        return Ok(simplices
            .iter()
            .map(|s| Face2 { edges: [s.edges[0], s.edges[1], s.edges[2]] })
            .collect());
    }
    let pairs = local_edge_pairs(3);
    let pair_index = |a: usize, b: usize| pairs.iter().position(|&p| p == (a.min(b), a.max(b))).unwrap();
    let mut seen: BTreeMap<[usize; 3], Face2> = BTreeMap::new();
    for s in simplices {
        for omit in 0..4 {
            let local: Vec<usize> = (0..4).filter(|&x| x != omit).collect();
            let adjust = |(eid, sg): (usize, i8)| (eid, sg);
            let face = Face2 {
                edges: [
                    adjust(s.edges[pair_index(local[0], local[1])]),
                    adjust(s.edges[pair_index(local[0], local[2])]),
                    adjust(s.edges[pair_index(local[1], local[2])]),
                ],
            };
            let mut key = [face.edges[0].0, face.edges[1].0, face.edges[2].0];
            key.sort_unstable();
            seen.entry(key).or_insert(face);
        }
    }
    Ok(seen.into_values().collect())
}

/// Cup-product pairing of two closed 1-forms on an oriented 2-mesh via the
/// piecewise-constant wedge. Purely combinatorial-metric-free, so the value
/// is identical across refinements.
pub fn wedge_integral(a: &Form, b: &Form, mesh: &Mesh) -> Result<f64> {
    if mesh.dim != 2 {
        return Err(Error::UnsupportedDimension { dim: mesh.dim, reason: "wedge integral needs a 2-mesh".into() });
    }
    a.check_mesh(mesh)?;
    b.check_mesh(mesh)?;
    let scale = a
        .values
        .iter()
        .chain(&b.values)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    if mesh.coboundary_residual(a)? > 1e-10 * scale || mesh.coboundary_residual(b)? > 1e-10 * scale {
        return Err(Error::InvalidForm("wedge integral requires closed forms".into()));
    }
    let mut total = 0.0;
    for i in 0..mesh.num_simplices() {
        let wa = mesh.spanning_components(i, a);
        let wb = mesh.spanning_components(i, b);
        total += 0.5 * (wa[0] * wb[1] - wa[1] * wb[0]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{critical_lattice, Lattice};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn unit_square_torus(k: usize) -> Mesh {
        let l = Lattice::from_gram(DMatrix::identity(2, 2)).unwrap();
        flat_torus_mesh(&l, k).unwrap()
    }

    #[test]
    fn unit_torus_counts_and_area() {
        for k in [1usize, 2, 4] {
            let m = unit_square_torus(k);
            assert_eq!(m.num_vertices, k * k);
            assert_eq!(m.num_edges(), 3 * k * k);
            assert_eq!(m.num_simplices(), 2 * k * k);
            assert_eq!(m.euler_characteristic(), 0);
            assert_relative_eq!(m.volume(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hexagonal_torus_area_is_covolume() {
        let l = critical_lattice(2).unwrap();
        let m = flat_torus_mesh(&l, 4).unwrap();
        assert_eq!(m.num_simplices(), 32);
        assert_relative_eq!(m.volume(), 3.0_f64.sqrt() / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn cube_torus_volume() {
        let l = Lattice::from_gram(DMatrix::identity(3, 3)).unwrap();
        let m = flat_torus_mesh(&l, 2).unwrap();
        assert_eq!(m.num_simplices(), 48);
        assert_relative_eq!(m.volume(), 1.0, epsilon = 1e-10);
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn boundary_of_boundary_vanishes() {
        let l = critical_lattice(2).unwrap();
        let m = flat_torus_mesh(&l, 3).unwrap();
        // d1 . d2 = 0 exactly over the integers
        let d1 = m.boundary1_columns();
        let d2 = m.boundary2_columns();
        for col in &d2 {
            let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
            for &(eid, c) in col {
                for &(v, s) in &d1[eid] {
                    *acc.entry(v).or_insert(0) += c * s;
                }
            }
            assert!(acc.values().all(|&x| x == 0));
        }

        let l3 = Lattice::from_gram(DMatrix::identity(3, 3)).unwrap();
        let m3 = flat_torus_mesh(&l3, 2).unwrap();
        let d2 = m3.boundary2_columns();
        let d3 = m3.boundary3_columns().unwrap();
        for col in &d3 {
            let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
            for &(f, c) in col {
                for &(eid, s) in &d2[f] {
                    *acc.entry(eid).or_insert(0) += c * s;
                }
            }
            assert!(acc.values().all(|&x| x == 0), "d2.d3 != 0");
        }
    }

    #[test]
    fn volume_scales_with_conformal_factor() {
        let m = unit_square_torus(4);
        let scaled = m.conformal_scale(&vec![2.0; m.num_vertices]).unwrap();
        assert_relative_eq!(scaled.volume(), 4.0, epsilon = 1e-10);
        let same = m.conformal_scale(&vec![1.0; m.num_vertices]).unwrap();
        assert_relative_eq!(same.volume(), 1.0, epsilon = 1e-12);
        assert!(m.conformal_scale(&vec![-1.0; m.num_vertices]).is_err());
    }

    #[test]
    fn normalize_volume_rescales_lengths() {
        let l = critical_lattice(2).unwrap();
        let m = flat_torus_mesh(&l, 2).unwrap();
        let n = m.normalized_volume().unwrap();
        assert_relative_eq!(n.volume(), 1.0, epsilon = 1e-12);
        let expected = (2.0 / 3.0_f64.sqrt()).sqrt();
        assert_relative_eq!(n.edge_lengths()[0] / m.edge_lengths()[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn whitney_matches_spanning_on_closed_forms() {
        let m = unit_square_torus(3);
        let h = m.homology_basis().unwrap();
        let form = Form::new(&m, h.cocycles[0].iter().map(|&v| v as f64).collect()).unwrap();
        assert!(m.coboundary_residual(&form).unwrap() < 1e-12);
        for i in 0..m.num_simplices() {
            let a = m.spanning_components(i, &form);
            let b = m.whitney_components(i, &form);
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn wedge_of_dual_cocycles_is_one() {
        for k in [2usize, 3, 5] {
            let m = unit_square_torus(k);
            let h = m.homology_basis().unwrap();
            let a = Form::new(&m, h.cocycles[0].iter().map(|&v| v as f64).collect()).unwrap();
            let b = Form::new(&m, h.cocycles[1].iter().map(|&v| v as f64).collect()).unwrap();
            let w = wedge_integral(&a, &b, &m).unwrap();
            assert_relative_eq!(w.abs(), 1.0, epsilon = 1e-12);
            // antisymmetry and the zero self-wedge
            assert_relative_eq!(wedge_integral(&b, &a, &m).unwrap(), -w, epsilon = 1e-12);
            assert_relative_eq!(wedge_integral(&a, &a, &m).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn wedge_depends_only_on_cohomology_class() {
        let m = unit_square_torus(4);
        let h = m.homology_basis().unwrap();
        let a = Form::new(&m, h.cocycles[0].iter().map(|&v| v as f64).collect()).unwrap();
        let b = Form::new(&m, h.cocycles[1].iter().map(|&v| v as f64).collect()).unwrap();
        // add a coboundary dg to a
        let mut g = vec![0.0; m.num_vertices];
        for (i, gv) in g.iter_mut().enumerate() {
            *gv = (i as f64 * 0.37).sin();
        }
        let mut values = a.values.clone();
        for (eid, &(u, v)) in m.edges().iter().enumerate() {
            values[eid] += g[v] - g[u];
        }
        let a_shifted = Form::new(&m, values).unwrap();
        let w0 = wedge_integral(&a, &b, &m).unwrap();
        let w1 = wedge_integral(&a_shifted, &b, &m).unwrap();
        assert!((w0 - w1).abs() < 1e-8);
    }

    #[test]
    fn mesh_json_roundtrip_simple() {
        let l = critical_lattice(2).unwrap();
        let m = flat_torus_mesh(&l, 3).unwrap();
        let s = m.to_json_string();
        let back = Mesh::from_json_str(&s).unwrap();
        assert_eq!(back.num_simplices(), m.num_simplices());
        assert_relative_eq!(back.volume(), m.volume(), epsilon = 1e-12);
    }

    #[test]
    fn mesh_json_roundtrip_delta_complex() {
        let m = unit_square_torus(1); // loop edges force the extended format
        let s = m.to_json_string();
        assert!(s.contains("edge_lengths_list"));
        let back = Mesh::from_json_str(&s).unwrap();
        assert_relative_eq!(back.volume(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_metric_rejected() {
        let mut lengths = BTreeMap::new();
        lengths.insert((0, 1), 1.0);
        lengths.insert((0, 2), 1.0);
        lengths.insert((1, 2), 3.0); // violates the triangle inequality
        lengths.insert((0, 3), 1.0);
        lengths.insert((1, 3), 1.0);
        lengths.insert((2, 3), 1.0);
        let res = Mesh::from_simplices(2, vec![vec![0, 1, 2], vec![0, 1, 3]], &lengths);
        assert!(matches!(res, Err(Error::InvalidMetric(_))));
    }
}
