//! Nédélec edge elements: degree-of-freedom maps, assembly of the Maxwell
//! bilinear form, discrete gradients, projections, the dual basis, and the
//! elementwise Nédélec / Raviart–Thomas interpolants.

mod assembly;
mod dual;
mod interpolation;
mod local;
mod projection;
pub mod whitney;

pub use assembly::{assemble_system, discrete_gradient, GalerkinSystem, GradientMatrix, NodalSpace};
pub use dual::{dual_basis, DualBasis, DualFunctional};
pub use interpolation::{
    commuting_check, nedelec_interpolant, nedelec_interpolant_with, rt_face_interpolant, whitney_interpolant_eval,
};
pub use local::{gram_norm2, EdgeGram, NodalGram};
pub use projection::{l2_project, pi_nabla_project, L2Projection, RegionNodalSpace};
pub use whitney::{local_whitney, TetGeometry};

use crate::mesh::Mesh;

/// Degrees of freedom of the edge-element space with vanishing tangential
/// trace: one per edge not lying on the boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    interior_edges: Vec<usize>,
    edge_to_dof: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut edge_to_dof = vec![None; mesh.edges().len()];
        let mut interior_edges = Vec::new();
        for e in 0..mesh.edges().len() {
            if !mesh.is_boundary_edge(e) {
                edge_to_dof[e] = Some(interior_edges.len());
                interior_edges.push(e);
            }
        }
        Self { interior_edges, edge_to_dof }
    }

    pub fn len(&self) -> usize {
        self.interior_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior_edges.is_empty()
    }

    pub fn edge(&self, dof: usize) -> usize {
        self.interior_edges[dof]
    }

    pub fn interior_edges(&self) -> &[usize] {
        &self.interior_edges
    }

    pub fn dof(&self, edge: usize) -> Option<usize> {
        self.edge_to_dof[edge]
    }

    /// DOF index and sign of each local edge of a tetrahedron (`None` for boundary edges).
    pub fn tet_dofs(&self, mesh: &Mesh, t: usize) -> [Option<(usize, f64)>; 6] {
        mesh.tet_edges()[t].map(|(e, s)| self.edge_to_dof[e].map(|d| (d, s)))
    }
}
