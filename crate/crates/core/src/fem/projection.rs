use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::local::{EdgeGram, NodalGram};
use super::whitney::{tet_signs, TetGeometry};
use super::{DofMap, GalerkinSystem, GradientMatrix, NodalSpace};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::{self, C64};
use crate::mesh::Mesh;
use crate::quadrature;

#[derive(Debug, Clone)]
pub struct L2Projection {
    pub coeffs: DVector<f64>,
    pub load: DVector<f64>,
    /// `‖M u − f‖ / ‖f‖` (zero when `f = 0`).
    pub residual: f64,
}

/// `L²` projection of a field onto the edge-element space: solves `M u = f`
/// with `f_i = ⟨F, Ψ_i⟩` integrated by a tet rule exact to `degree`.
pub fn l2_project(
    mesh: &Mesh,
    system: &GalerkinSystem,
    field: &impl VectorField,
    degree: usize,
) -> Result<L2Projection> {
    let dofs = system.dofs();
    let rule = quadrature::tet_rule(degree)?;
    let mut load = DVector::zeros(dofs.len());
    for t in 0..mesh.tets().len() {
        let geo = TetGeometry::of_mesh(mesh, t)?;
        let signs = tet_signs(mesh, t);
        let local = dofs.tet_dofs(mesh, t);
        for (bary, w) in rule.iter() {
            let val = field.eval(&geo.point(bary));
            if !val.iter().all(|v| v.is_finite()) {
                return Err(Error::Quadrature(degree));
            }
            let psi = geo.whitney_at(bary);
            for k in 0..6 {
                if let Some((d, _)) = local[k] {
                    load[d] += w * geo.volume * signs[k] * val.dot(&psi[k]);
                }
            }
        }
    }
    let m = linalg::csr_to_dense(system.mass());
    let chol = m.clone().cholesky().ok_or_else(|| Error::Singular("mass matrix".into()))?;
    let coeffs = chol.solve(&load);
    let fnorm = load.norm();
    let residual = if fnorm == 0.0 { 0.0 } else { (&m * &coeffs - &load).norm() / fnorm };
    Ok(L2Projection { coeffs, load, residual })
}

/// Continuous piecewise linears restricted to a mesh-conforming region,
/// together with the edge Gram data needed for the projection onto their
/// gradients.
#[derive(Debug, Clone)]
pub struct RegionNodalSpace {
    pub edges: EdgeGram,
    pub nodes: NodalGram,
    /// Local gradient matrix (local edges × local nodes).
    pub grad: DMatrix<f64>,
    /// Node whose value is fixed to zero when the region does not touch the
    /// boundary (constants would otherwise be in the kernel).
    pub pinned: Option<usize>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl RegionNodalSpace {
    pub fn new(
        mesh: &Mesh,
        dofs: &DofMap,
        nodal: &NodalSpace,
        gradient: &GradientMatrix,
        tets: &[usize],
    ) -> Result<Self> {
        let edges = EdgeGram::new(mesh, dofs, tets)?;
        let nodes = NodalGram::new(mesh, nodal, tets)?;
        let grad = linalg::csr_submatrix(gradient.matrix(), &edges.dofs, &nodes.nodes);
        let pinned = (!nodes.touches_boundary && !nodes.is_empty()).then_some(0);
        let mut space = Self { edges, nodes, grad, pinned, chol: None };
        if !space.nodes.is_empty() {
            let gram = space.free_gram();
            let chol = gram
                .cholesky()
                .ok_or_else(|| Error::Singular("gradient Gram matrix of region".into()))?;
            space.chol = Some(chol);
        }
        Ok(space)
    }

    /// `⟨∇φ_a, ∇φ_b⟩` over the region.
    pub fn gram(&self) -> DMatrix<f64> {
        self.grad.transpose() * &self.edges.mass * &self.grad
    }

    fn free(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|k| Some(*k) != self.pinned).collect()
    }

    fn free_gram(&self) -> DMatrix<f64> {
        let g = self.gram();
        let free = self.free();
        DMatrix::from_fn(free.len(), free.len(), |i, j| g[(free[i], free[j])])
    }

    /// `⟨E_h, ∇φ_a⟩` over the region for local edge coefficients.
    pub fn gradient_load(&self, local_edges: &DVector<C64>) -> DVector<C64> {
        let me = linalg::to_complex(&self.edges.mass) * local_edges;
        linalg::to_complex(&self.grad.transpose()) * me
    }

    /// Local edge coefficients of `∇p` for local nodal values `p`.
    pub fn gradient_of(&self, p: &DVector<C64>) -> DVector<C64> {
        linalg::to_complex(&self.grad) * p
    }
}

/// `Π^∇`: the `L²(D̃)` projection of an edge-element function (given by
/// global coefficients) onto gradients of the region's nodal space.
/// Returns local nodal values; the gradient is unique, the potential is
/// unique up to the pinned constant.
pub fn pi_nabla_project(space: &RegionNodalSpace, coeffs: &DVector<C64>) -> DVector<C64> {
    let n = space.nodes.len();
    let Some(chol) = &space.chol else {
        return DVector::zeros(n);
    };
    let load = space.gradient_load(&space.edges.restrict(coeffs));
    let free = space.free();
    let rhs_re = DVector::from_iterator(free.len(), free.iter().map(|k| load[*k].re));
    let rhs_im = DVector::from_iterator(free.len(), free.iter().map(|k| load[*k].im));
    let re = chol.solve(&rhs_re);
    let im = chol.solve(&rhs_im);
    let mut p = DVector::zeros(n);
    for (slot, k) in free.iter().enumerate() {
        p[*k] = C64::new(re[slot], im[slot]);
    }
    p
}
