use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use super::whitney::{orient, tet_signs, TetGeometry};
use super::DofMap;
use crate::error::{Error, Result};
use crate::linalg::{self, Accumulator, C64};
use crate::mesh::Mesh;

/// Galerkin matrices of `a(E, Ψ) = ⟨curl E, curl Ψ⟩ − κ ⟨E, Ψ⟩` on the
/// interior-edge basis. The form is bilinear, so `A` is complex symmetric.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    dofs: DofMap,
    curl: CsrMatrix<f64>,
    mass: CsrMatrix<f64>,
    kappa: C64,
    h: f64,
    n: usize,
}

impl GalerkinSystem {
    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn kappa(&self) -> C64 {
        self.kappa
    }

    pub fn is_real(&self) -> bool {
        self.kappa.im == 0.0
    }

    pub fn mesh_width(&self) -> f64 {
        self.h
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    /// Curl-curl matrix `K`.
    pub fn curl_curl(&self) -> &CsrMatrix<f64> {
        &self.curl
    }

    /// Mass matrix `M`.
    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    /// `A = K − κ M` as a dense complex matrix.
    pub fn stiffness_dense(&self) -> DMatrix<C64> {
        let k = linalg::csr_to_dense(&self.curl);
        let m = linalg::csr_to_dense(&self.mass);
        DMatrix::from_fn(self.len(), self.len(), |i, j| C64::new(k[(i, j)], 0.0) - self.kappa * m[(i, j)])
    }

    /// `A` as a real matrix when κ is real.
    pub fn stiffness_dense_real(&self) -> Option<DMatrix<f64>> {
        self.is_real().then(|| {
            linalg::csr_to_dense(&self.curl) - linalg::csr_to_dense(&self.mass) * self.kappa.re
        })
    }

    pub fn stiffness_entry(&self, i: usize, j: usize) -> C64 {
        let k = self.curl.get_entry(i, j).map(|e| e.into_value()).unwrap_or(0.0);
        let m = self.mass.get_entry(i, j).map(|e| e.into_value()).unwrap_or(0.0);
        C64::new(k, 0.0) - self.kappa * m
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        linalg::csr_mul_c(&self.curl, x) - linalg::csr_mul_c(&self.mass, x) * self.kappa
    }
}

pub fn assemble_system(mesh: &Mesh, dofs: &DofMap, kappa: C64) -> Result<GalerkinSystem> {
    if kappa.norm() == 0.0 || !kappa.re.is_finite() || !kappa.im.is_finite() {
        return Err(Error::InvalidInput("kappa must be finite and nonzero".into()));
    }
    let n = dofs.len();
    let mut curl = Accumulator::new(n, n);
    let mut mass = Accumulator::new(n, n);
    for t in 0..mesh.tets().len() {
        let geo = TetGeometry::of_mesh(mesh, t)?;
        let signs = tet_signs(mesh, t);
        let kl = orient(&geo.curl_matrix(), &signs);
        let ml = orient(&geo.mass_matrix(), &signs);
        let local = dofs.tet_dofs(mesh, t);
        for a in 0..6 {
            let Some((i, _)) = local[a] else { continue };
            for b in 0..6 {
                let Some((j, _)) = local[b] else { continue };
                curl.add(i, j, kl[(a, b)]);
                mass.add(i, j, ml[(a, b)]);
            }
        }
    }
    Ok(GalerkinSystem {
        dofs: dofs.clone(),
        curl: curl.into_csr(),
        mass: mass.into_csr(),
        kappa,
        h: mesh.mesh_width(),
        n: mesh.subdivisions(),
    })
}

/// Continuous piecewise-linear functions vanishing on the boundary.
#[derive(Debug, Clone)]
pub struct NodalSpace {
    interior_vertices: Vec<usize>,
    vertex_to_dof: Vec<Option<usize>>,
    stiffness: CsrMatrix<f64>,
    mass: CsrMatrix<f64>,
}

impl NodalSpace {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let mut vertex_to_dof = vec![None; mesh.vertices().len()];
        let mut interior_vertices = Vec::new();
        for v in 0..mesh.vertices().len() {
            if !mesh.is_boundary_vertex(v) {
                vertex_to_dof[v] = Some(interior_vertices.len());
                interior_vertices.push(v);
            }
        }
        let nv = interior_vertices.len();
        let mut stiff = Accumulator::new(nv, nv);
        let mut mass = Accumulator::new(nv, nv);
        for (t, tet) in mesh.tets().iter().enumerate() {
            let geo = TetGeometry::of_mesh(mesh, t)?;
            for a in 0..4 {
                let Some(i) = vertex_to_dof[tet[a]] else { continue };
                for b in 0..4 {
                    let Some(j) = vertex_to_dof[tet[b]] else { continue };
                    stiff.add(i, j, geo.volume * geo.grads[a].dot(&geo.grads[b]));
                    mass.add(i, j, geo.volume * if a == b { 0.1 } else { 0.05 });
                }
            }
        }
        Ok(Self {
            interior_vertices,
            vertex_to_dof,
            stiffness: stiff.into_csr(),
            mass: mass.into_csr(),
        })
    }

    pub fn len(&self) -> usize {
        self.interior_vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior_vertices.is_empty()
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.interior_vertices[dof]
    }

    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior_vertices
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.vertex_to_dof[vertex]
    }

    /// Nodal Laplacian `⟨∇φ_i, ∇φ_j⟩`.
    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }
}

/// Edge coefficients of gradients of nodal functions: `(G p)_e = p(b) − p(a)`
/// for the edge oriented from `a` to `b`.
#[derive(Debug, Clone)]
pub struct GradientMatrix {
    g: CsrMatrix<f64>,
}

impl GradientMatrix {
    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.g
    }

    pub fn apply(&self, p: &DVector<f64>) -> DVector<f64> {
        linalg::csr_mul(&self.g, p)
    }

    pub fn apply_c(&self, p: &DVector<C64>) -> DVector<C64> {
        linalg::csr_mul_c(&self.g, p)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        linalg::csr_to_dense(&self.g)
    }
}

pub fn discrete_gradient(mesh: &Mesh, dofs: &DofMap, nodal: &NodalSpace) -> GradientMatrix {
    let mut g = Accumulator::new(dofs.len(), nodal.len());
    for (i, e) in dofs.interior_edges().iter().enumerate() {
        let [a, b] = mesh.edges()[*e];
        if let Some(vb) = nodal.dof(b) {
            g.add(i, vb, 1.0);
        }
        if let Some(va) = nodal.dof(a) {
            g.add(i, va, -1.0);
        }
    }
    GradientMatrix { g: g.into_csr() }
}
