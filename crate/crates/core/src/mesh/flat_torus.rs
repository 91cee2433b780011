//! Flat torus triangulations: k^b fundamental cells, each split into two
//! triangles (b = 2) or six tetrahedra along the Kuhn diagonal (b = 3). The
//! edge lengths come from the lattice metric, and the constructors install
//! the obvious integral homology bases (axis loops paired with seam-crossing
//! cocycles).

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::mesh::homology::HomologyData;
use crate::mesh::{local_edge_pairs, Mesh, Simplex};

/// Triangulate R^b / L with k^b cells. Volume equals covol(L) exactly.
pub fn flat_torus_mesh(lattice: &Lattice, k: usize) -> Result<Mesh> {
    if k < 1 {
        return Err(Error::InvalidInput("refinement must be at least 1".into()));
    }
    match lattice.dim() {
        2 => torus_2d(lattice, k),
        3 => torus_3d(lattice, k),
        d => Err(Error::UnsupportedDimension { dim: d, reason: "flat torus meshes exist for b in {2, 3}".into() }),
    }
}

fn torus_2d(lattice: &Lattice, k: usize) -> Result<Mesh> {
    let basis = lattice.basis();
    let step = |dx: f64, dy: f64| -> f64 {
        let v = basis.column(0) * dx + basis.column(1) * dy;
        v.norm() / k as f64
    };
    let len_h = step(1.0, 0.0);
    let len_v = step(0.0, 1.0);
    let len_d = step(1.0, 1.0);

    let n = k * k;
    let vid = |i: usize, j: usize| (i % k) + k * (j % k);
    // edge ids: horizontal block, vertical block, diagonal block
    let h = |i: usize, j: usize| vid(i, j);
    let v = |i: usize, j: usize| n + vid(i, j);
    let d = |i: usize, j: usize| 2 * n + vid(i, j);

    let mut edges = vec![(0usize, 0usize); 3 * n];
    let mut lengths = vec![0.0; 3 * n];
    for j in 0..k {
        for i in 0..k {
            edges[h(i, j)] = (vid(i, j), vid(i + 1, j));
            lengths[h(i, j)] = len_h;
            edges[v(i, j)] = (vid(i, j), vid(i, j + 1));
            lengths[v(i, j)] = len_v;
            edges[d(i, j)] = (vid(i, j), vid(i + 1, j + 1));
            lengths[d(i, j)] = len_d;
        }
    }

    // cells split along the diagonal; both triangles positively oriented in
    // lattice coordinates
    let mut simplices = Vec::with_capacity(2 * n);
    for j in 0..k {
        for i in 0..k {
            // (a, a+x, a+x+y): edges (0,1) = h(i,j), (0,2) = d(i,j), (1,2) = v(i+1,j)
            simplices.push(Simplex {
                vertices: vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)],
                edges: vec![(h(i, j), 1), (d(i, j), 1), (v(i + 1, j), 1)],
            });
            // (a, a+x+y, a+y): edges (0,1) = d(i,j), (0,2) = v(i,j), (1,2) = -h(i,j+1)
            simplices.push(Simplex {
                vertices: vec![vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)],
                edges: vec![(d(i, j), 1), (v(i, j), 1), (h(i, j + 1), -1)],
            });
        }
    }

    let mesh = Mesh::from_parts(2, n, edges, lengths, simplices)?;

    // homology: axis loops against seam-crossing cocycles
    let cycle_x: Vec<(usize, i64)> = (0..k).map(|i| (h(i, 0), 1)).collect();
    let cycle_y: Vec<(usize, i64)> = (0..k).map(|j| (v(0, j), 1)).collect();
    let mut alpha = vec![0i64; 3 * n];
    let mut beta = vec![0i64; 3 * n];
    for j in 0..k {
        alpha[h(k - 1, j)] = 1;
        alpha[d(k - 1, j)] = 1;
    }
    for i in 0..k {
        beta[v(i, k - 1)] = 1;
        beta[d(i, k - 1)] = 1;
    }
    let data = HomologyData::verified(&mesh, vec![cycle_x, cycle_y], vec![alpha, beta])?;
    mesh.set_homology(data);
    Ok(mesh)
}

/// The seven Kuhn edge direction classes on the cubical grid.
const DIRS3: [(usize, usize, usize); 7] = [
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (0, 1, 1),
    (1, 0, 1),
    (1, 1, 1),
];

fn torus_3d(lattice: &Lattice, k: usize) -> Result<Mesh> {
    let basis = lattice.basis();
    let n = k * k * k;
    let vid = |i: usize, j: usize, l: usize| (i % k) + k * (j % k) + k * k * (l % k);
    let dir_len: Vec<f64> = DIRS3
        .iter()
        .map(|&(a, b, c)| {
            let v = basis.column(0) * a as f64 + basis.column(1) * b as f64 + basis.column(2) * c as f64;
            v.norm() / k as f64
        })
        .collect();
    let eid = |dir: usize, i: usize, j: usize, l: usize| dir * n + vid(i, j, l);

    let mut edges = vec![(0usize, 0usize); 7 * n];
    let mut lengths = vec![0.0; 7 * n];
    for l in 0..k {
        for j in 0..k {
            for i in 0..k {
                for (dir, &(a, b, c)) in DIRS3.iter().enumerate() {
                    let id = eid(dir, i, j, l);
                    edges[id] = (vid(i, j, l), vid(i + a, j + b, l + c));
                    lengths[id] = dir_len[dir];
                }
            }
        }
    }

    // Kuhn tetrahedra: one per permutation of the axes, consistently oriented
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let parity = |p: &[usize; 3]| -> i32 {
        let mut s = 1;
        for a in 0..3 {
            for b in a + 1..3 {
                if p[a] > p[b] {
                    s = -s;
                }
            }
        }
        s
    };
    let pairs = local_edge_pairs(3);
    let mut simplices = Vec::with_capacity(6 * n);
    for l in 0..k {
        for j in 0..k {
            for i in 0..k {
                for p in &perms {
                    // path corners in grid offsets
                    let mut offs = [[0usize; 3]; 4];
                    for step in 0..3 {
                        offs[step + 1] = offs[step];
                        offs[step + 1][p[step]] += 1;
                    }
                    let mut corner_ids: Vec<usize> = offs
                        .iter()
                        .map(|o| vid(i + o[0], j + o[1], l + o[2]))
                        .collect();
                    let mut offsets: Vec<[usize; 3]> = offs.to_vec();
                    if parity(p) < 0 {
                        corner_ids.swap(2, 3);
                        offsets.swap(2, 3);
                    }
                    // edges between all corner pairs follow from grid offsets
                    let mut se = Vec::with_capacity(6);
                    for &(a, b) in &pairs {
                        let (oa, ob) = (offsets[a], offsets[b]);
                        let delta = [
                            ob[0] as i64 - oa[0] as i64,
                            ob[1] as i64 - oa[1] as i64,
                            ob[2] as i64 - oa[2] as i64,
                        ];
                        let (base, dvec, sign) = if delta.iter().all(|&x| x >= 0) {
                            (oa, [delta[0] as usize, delta[1] as usize, delta[2] as usize], 1i8)
                        } else {
                            (ob, [(-delta[0]) as usize, (-delta[1]) as usize, (-delta[2]) as usize], -1i8)
                        };
                        let dir = DIRS3
                            .iter()
                            .position(|&(x, y, z)| (x, y, z) == (dvec[0], dvec[1], dvec[2]))
                            .ok_or_else(|| Error::Internal("Kuhn edge direction out of catalog".into()))?;
                        se.push((eid(dir, i + base[0], j + base[1], l + base[2]), sign));
                    }
                    simplices.push(Simplex { vertices: corner_ids, edges: se });
                }
            }
        }
    }

    let mesh = Mesh::from_parts(3, n, edges, lengths, simplices)?;

    // axis loops and seam cochains
    let mut cycles = Vec::with_capacity(3);
    for axis in 0..3 {
        let mut cyc = Vec::with_capacity(k);
        for t in 0..k {
            let (i, j, l) = match axis {
                0 => (t, 0, 0),
                1 => (0, t, 0),
                _ => (0, 0, t),
            };
            cyc.push((eid(axis, i, j, l), 1i64));
        }
        cycles.push(cyc);
    }
    let mut cocycles = vec![vec![0i64; 7 * n]; 3];
    for l in 0..k {
        for j in 0..k {
            for i in 0..k {
                for (dir, &(a, b, c)) in DIRS3.iter().enumerate() {
                    let id = eid(dir, i, j, l);
                    if a == 1 && i == k - 1 {
                        cocycles[0][id] = 1;
                    }
                    if b == 1 && j == k - 1 {
                        cocycles[1][id] = 1;
                    }
                    if c == 1 && l == k - 1 {
                        cocycles[2][id] = 1;
                    }
                }
            }
        }
    }
    let data = HomologyData::verified(&mesh, cycles, cocycles)?;
    mesh.set_homology(data);
    Ok(mesh)
}
