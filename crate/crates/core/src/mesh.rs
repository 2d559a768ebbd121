//! Structured tetrahedral meshes of an axis-aligned cube.
//!
//! Each of the `n³` subcubes is split into six tetrahedra (Kuhn/Freudenthal
//! subdivision). All six share the subcube's main diagonal, so the pattern
//! tiles space conformingly and every tetrahedron is congruent up to
//! reflection; the shape-regularity constant does not depend on `n`.
//!
//! Edges are oriented from the lower to the higher global vertex id. The sign
//! of each local edge relative to that global direction is kept in
//! [`Mesh::tet_edges`].

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

/// Local edges of a tetrahedron, as pairs of local vertex indices.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Local faces; face `k` is opposite local vertex `k`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, Clone)]
pub struct Mesh {
    origin: Point3<f64>,
    side: f64,
    n: usize,
    vertices: Vec<Point3<f64>>,
    tets: Vec<[usize; 4]>,
    edges: Vec<[usize; 2]>,
    tet_edges: Vec<[(usize, f64); 6]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
    edge_tets: Vec<Vec<usize>>,
    vertex_tets: Vec<Vec<usize>>,
    h: f64,
}

/// JSON dump of a mesh. Ids are 0-based.
#[derive(Debug, Serialize)]
pub struct MeshDump<'a> {
    pub vertices: Vec<[f64; 3]>,
    pub tets: &'a [[usize; 4]],
    pub edges: &'a [[usize; 2]],
    pub boundary_edges: Vec<usize>,
}

/// Builds the Kuhn mesh of the cube `[0, side]³` with `n` subdivisions per axis.
pub fn build_box_mesh(n: usize, side: f64) -> Result<Mesh> {
    Mesh::new(Point3::origin(), n, side)
}

impl Mesh {
    pub fn new(origin: Point3<f64>, n: usize, side: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("subdivisions must be at least 1".into()));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidInput(format!("side length must be positive, got {side}")));
        }
        if !(origin.x.is_finite() && origin.y.is_finite() && origin.z.is_finite()) {
            return Err(Error::InvalidInput("origin must be finite".into()));
        }
        let np = n + 1;
        let step = side / n as f64;
        let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);

        let mut vertices = Vec::with_capacity(np * np * np);
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    vertices.push(origin + Vector3::new(i as f64, j as f64, k as f64) * step);
                }
            }
        }

        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut tets = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for perm in PERMS {
                        let mut c = [i, j, k];
                        let mut tet = [vid(i, j, k), 0, 0, 0];
                        for (slot, axis) in perm.iter().enumerate() {
                            c[*axis] += 1;
                            tet[slot + 1] = vid(c[0], c[1], c[2]);
                        }
                        if signed_volume(&vertices, &tet) < 0.0 {
                            tet.swap(2, 3);
                        }
                        tets.push(tet);
                    }
                }
            }
        }

        let mut edge_ids: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for tet in &tets {
            for [a, b] in LOCAL_EDGES {
                let (lo, hi) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
                edge_ids.insert([lo, hi], 0);
            }
        }
        let mut edges = Vec::with_capacity(edge_ids.len());
        for (id, (key, slot)) in edge_ids.iter_mut().enumerate() {
            *slot = id;
            edges.push(*key);
        }

        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut edge_tets = vec![Vec::new(); edges.len()];
        let mut vertex_tets = vec![Vec::new(); vertices.len()];
        for (t, tet) in tets.iter().enumerate() {
            let mut local = [(0usize, 0.0f64); 6];
            for (l, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let (va, vb) = (tet[*a], tet[*b]);
                let id = edge_ids[&[va.min(vb), va.max(vb)]];
                local[l] = (id, if va < vb { 1.0 } else { -1.0 });
                edge_tets[id].push(t);
            }
            for v in tet {
                vertex_tets[*v].push(t);
            }
            tet_edges.push(local);
        }

        let tol = 1e-12 * side;
        let upper = origin + Vector3::repeat(side);
        let on_face = |p: &Point3<f64>, axis: usize| -> Option<bool> {
            if (p[axis] - origin[axis]).abs() <= tol {
                Some(false)
            } else if (p[axis] - upper[axis]).abs() <= tol {
                Some(true)
            } else {
                None
            }
        };
        let boundary_vertex: Vec<bool> = vertices
            .iter()
            .map(|p| (0..3).any(|axis| on_face(p, axis).is_some()))
            .collect();
        let boundary_edge = edges
            .iter()
            .map(|[a, b]| {
                (0..3).any(|axis| match (on_face(&vertices[*a], axis), on_face(&vertices[*b], axis)) {
                    (Some(fa), Some(fb)) => fa == fb,
                    _ => false,
                })
            })
            .collect();

        let mut mesh = Mesh {
            origin,
            side,
            n,
            vertices,
            tets,
            edges,
            tet_edges,
            boundary_vertex,
            boundary_edge,
            edge_tets,
            vertex_tets,
            h: 0.0,
        };
        mesh.h = (0..mesh.tets.len()).map(|t| mesh.tet_diameter(t)).fold(0.0, f64::max);
        Ok(mesh)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Per tetrahedron, the global edge id and orientation sign (`±1.0`) of
    /// each local edge in [`LOCAL_EDGES`] order.
    pub fn tet_edges(&self) -> &[[(usize, f64); 6]] {
        &self.tet_edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    /// Tetrahedra around a vertex, ascending.
    pub fn vertex_tets(&self, v: usize) -> &[usize] {
        &self.vertex_tets[v]
    }

    /// Mesh width: the largest tetrahedron diameter.
    pub fn mesh_width(&self) -> f64 {
        self.h
    }

    pub fn tet_points(&self, t: usize) -> [Point3<f64>; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t])
    }

    pub fn tet_diameter(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        LOCAL_EDGES
            .iter()
            .map(|[a, b]| (p[*a] - p[*b]).norm())
            .fold(0.0, f64::max)
    }

    /// `max_T diam(T) / |T|^{1/3}`.
    pub fn shape_constant(&self) -> f64 {
        (0..self.tets.len())
            .map(|t| self.tet_diameter(t) / self.tet_volume(t).cbrt())
            .fold(0.0, f64::max)
    }

    /// Tetrahedra containing the edge, in ascending order.
    pub fn support_tets(&self, edge: usize) -> Result<&[usize]> {
        self.edge_tets
            .get(edge)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidInput(format!("edge id {edge} out of range (have {})", self.edges.len())))
    }

    pub fn edge_midpoint(&self, e: usize) -> Point3<f64> {
        let [a, b] = self.edges[e];
        nalgebra::center(&self.vertices[a], &self.vertices[b])
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).norm()
    }

    pub fn dump(&self) -> MeshDump<'_> {
        MeshDump {
            vertices: self.vertices.iter().map(|p| [p.x, p.y, p.z]).collect(),
            tets: &self.tets,
            edges: &self.edges,
            boundary_edges: (0..self.edges.len()).filter(|e| self.boundary_edge[*e]).collect(),
        }
    }
}

fn signed_volume(vertices: &[Point3<f64>], tet: &[usize; 4]) -> f64 {
    let p0 = vertices[tet[0]];
    let m = Matrix3::from_columns(&[
        vertices[tet[1]] - p0,
        vertices[tet[2]] - p0,
        vertices[tet[3]] - p0,
    ]);
    m.determinant() / 6.0
}
