//! Gram matrices restricted to a set of tetrahedra (a mesh-conforming region).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::whitney::{orient, tet_signs, TetGeometry};
use super::{DofMap, NodalSpace};
use crate::error::Result;
use crate::linalg::C64;
use crate::mesh::Mesh;

/// Edge-element curl-curl and mass matrices integrated over a tet subset,
/// indexed by the DOFs whose support meets the subset.
#[derive(Debug, Clone)]
pub struct EdgeGram {
    pub tets: Vec<usize>,
    pub dofs: Vec<usize>,
    pub curl: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pos: Vec<Option<usize>>,
}

impl EdgeGram {
    pub fn new(mesh: &Mesh, dofmap: &DofMap, tets: &[usize]) -> Result<Self> {
        let dofs: Vec<usize> = tets
            .iter()
            .flat_map(|t| dofmap.tet_dofs(mesh, *t))
            .flatten()
            .map(|(d, _)| d)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut pos = vec![None; dofmap.len()];
        for (k, d) in dofs.iter().enumerate() {
            pos[*d] = Some(k);
        }
        let n = dofs.len();
        let mut curl = DMatrix::zeros(n, n);
        let mut mass = DMatrix::zeros(n, n);
        for t in tets {
            let geo = TetGeometry::of_mesh(mesh, *t)?;
            let signs = tet_signs(mesh, *t);
            let kl = orient(&geo.curl_matrix(), &signs);
            let ml = orient(&geo.mass_matrix(), &signs);
            let local = dofmap.tet_dofs(mesh, *t);
            for a in 0..6 {
                let Some((i, _)) = local[a] else { continue };
                let i = pos[i].unwrap();
                for b in 0..6 {
                    let Some((j, _)) = local[b] else { continue };
                    let j = pos[j].unwrap();
                    curl[(i, j)] += kl[(a, b)];
                    mass[(i, j)] += ml[(a, b)];
                }
            }
        }
        Ok(Self { tets: tets.to_vec(), dofs, curl, mass, pos })
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn local_index(&self, dof: usize) -> Option<usize> {
        self.pos.get(dof).copied().flatten()
    }

    pub fn restrict(&self, global: &DVector<C64>) -> DVector<C64> {
        DVector::from_iterator(self.dofs.len(), self.dofs.iter().map(|d| global[*d]))
    }

    pub fn extend(&self, local: &DVector<C64>, n_global: usize) -> DVector<C64> {
        let mut g = DVector::zeros(n_global);
        for (k, d) in self.dofs.iter().enumerate() {
            g[*d] = local[k];
        }
        g
    }
}

/// Squared `L²`-type norm `xᴴ G x` for a real symmetric Gram matrix.
pub fn gram_norm2(g: &DMatrix<f64>, x: &DVector<C64>) -> f64 {
    let re = x.map(|z| z.re);
    let im = x.map(|z| z.im);
    re.dot(&(g * &re)) + im.dot(&(g * &im))
}

/// Piecewise-linear nodal stiffness and mass over a tet subset, on the
/// interior (non-boundary) vertices touched by the subset.
#[derive(Debug, Clone)]
pub struct NodalGram {
    pub tets: Vec<usize>,
    /// Nodal DOF ids (indices into [`NodalSpace`]).
    pub nodes: Vec<usize>,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// Whether any vertex of the subset lies on the boundary of the domain.
    pub touches_boundary: bool,
    pos: Vec<Option<usize>>,
}

impl NodalGram {
    pub fn new(mesh: &Mesh, nodal: &NodalSpace, tets: &[usize]) -> Result<Self> {
        let mut touches_boundary = false;
        let mut set = BTreeSet::new();
        for t in tets {
            for v in mesh.tets()[*t] {
                match nodal.dof(v) {
                    Some(d) => {
                        set.insert(d);
                    }
                    None => touches_boundary = true,
                }
            }
        }
        let nodes: Vec<usize> = set.into_iter().collect();
        let mut pos = vec![None; nodal.len()];
        for (k, d) in nodes.iter().enumerate() {
            pos[*d] = Some(k);
        }
        let n = nodes.len();
        let mut stiffness = DMatrix::zeros(n, n);
        let mut mass = DMatrix::zeros(n, n);
        for t in tets {
            let geo = TetGeometry::of_mesh(mesh, *t)?;
            let tet = mesh.tets()[*t];
            for a in 0..4 {
                let Some(i) = nodal.dof(tet[a]).and_then(|d| pos[d]) else { continue };
                for b in 0..4 {
                    let Some(j) = nodal.dof(tet[b]).and_then(|d| pos[d]) else { continue };
                    stiffness[(i, j)] += geo.volume * geo.grads[a].dot(&geo.grads[b]);
                    mass[(i, j)] += geo.volume * if a == b { 0.1 } else { 0.05 };
                }
            }
        }
        Ok(Self { tets: tets.to_vec(), nodes, stiffness, mass, touches_boundary, pos })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.pos.get(node).copied().flatten()
    }
}
