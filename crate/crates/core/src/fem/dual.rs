//! Single-tetrahedron dual functionals `λ_i` biorthogonal to the edge basis.

use nalgebra::{DVector, Vector3, Vector6};

use super::whitney::{orient, tet_signs, TetGeometry};
use super::DofMap;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::mesh::Mesh;
use crate::quadrature::{self, TetRule};

#[derive(Debug, Clone)]
pub struct DualFunctional {
    pub carrier: usize,
    /// Position of the DOF's edge among the carrier's local edges.
    pub local: usize,
    /// Coefficients in the carrier's globally oriented local Whitney basis.
    pub coeffs: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct DualBasis {
    functionals: Vec<DualFunctional>,
    geometry: Vec<TetGeometry>,
    signs: Vec<[f64; 6]>,
    carrier_dofs: Vec<[Option<(usize, f64)>; 6]>,
    rule: TetRule,
}

/// Builds `λ_i` on the first tetrahedron of `supp Ψ_i` as
/// `(local mass)⁻¹ e_local`, so that `⟨λ_i, Ψ_j⟩ = δ_ij`.
pub fn dual_basis(mesh: &Mesh, dofs: &DofMap) -> Result<DualBasis> {
    let mut functionals = Vec::with_capacity(dofs.len());
    let mut geometry = Vec::with_capacity(dofs.len());
    let mut signs = Vec::with_capacity(dofs.len());
    let mut carrier_dofs = Vec::with_capacity(dofs.len());
    for i in 0..dofs.len() {
        let e = dofs.edge(i);
        let carrier = mesh.support_tets(e)?[0];
        let local = mesh.tet_edges()[carrier]
            .iter()
            .position(|(id, _)| *id == e)
            .expect("support tet lists the edge");
        let geo = TetGeometry::of_mesh(mesh, carrier)?;
        let s = tet_signs(mesh, carrier);
        let mass = orient(&geo.mass_matrix(), &s);
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("local mass matrix of tet {carrier}")))?;
        let mut rhs = Vector6::zeros();
        rhs[local] = 1.0;
        let c = chol.solve(&rhs);
        functionals.push(DualFunctional { carrier, local, coeffs: c.into() });
        geometry.push(geo);
        signs.push(s);
        carrier_dofs.push(dofs.tet_dofs(mesh, carrier));
    }
    Ok(DualBasis {
        functionals,
        geometry,
        signs,
        carrier_dofs,
        rule: quadrature::tet_rule(3)?,
    })
}

impl DualBasis {
    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn functional(&self, i: usize) -> &DualFunctional {
        &self.functionals[i]
    }

    fn oriented_whitney(&self, i: usize, bary: &[f64; 4]) -> [Vector3<f64>; 6] {
        let psi = self.geometry[i].whitney_at(bary);
        let s = &self.signs[i];
        [0, 1, 2, 3, 4, 5].map(|k| psi[k] * s[k])
    }

    /// `λ_i` at barycentric coordinates of its carrier.
    pub fn eval(&self, i: usize, bary: &[f64; 4]) -> Vector3<f64> {
        let phi = self.oriented_whitney(i, bary);
        phi.iter().zip(&self.functionals[i].coeffs).map(|(p, c)| p * *c).sum()
    }

    /// `‖λ_i‖_{L²}` by quadrature.
    pub fn norm(&self, i: usize) -> f64 {
        let vol = self.geometry[i].volume;
        self.rule
            .iter()
            .map(|(b, w)| w * vol * self.eval(i, b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// `⟨λ_i, Ψ_j⟩` by quadrature on the carrier of `λ_i`.
    pub fn pairing(&self, i: usize, j: usize) -> f64 {
        let Some(k) = self.carrier_dofs[i].iter().position(|slot| matches!(slot, Some((d, _)) if *d == j)) else {
            return 0.0;
        };
        let vol = self.geometry[i].volume;
        self.rule
            .iter()
            .map(|(b, w)| w * vol * self.eval(i, b).dot(&self.oriented_whitney(i, b)[k]))
            .sum()
    }

    /// `⟨λ_i, E_h⟩` for an edge-element function with global coefficients.
    pub fn apply_one(&self, i: usize, coeffs: &DVector<C64>) -> C64 {
        let vol = self.geometry[i].volume;
        let mut acc = C64::new(0.0, 0.0);
        for (b, w) in self.rule.iter() {
            let lam = self.eval(i, b);
            let phi = self.oriented_whitney(i, b);
            for (k, slot) in self.carrier_dofs[i].iter().enumerate() {
                if let Some((d, _)) = slot {
                    acc += coeffs[*d] * (w * vol * lam.dot(&phi[k]));
                }
            }
        }
        acc
    }

    /// `Λ_τ(E_h)`, listed in the order of `tau`.
    pub fn apply(&self, coeffs: &DVector<C64>, tau: &[usize]) -> DVector<C64> {
        DVector::from_iterator(tau.len(), tau.iter().map(|i| self.apply_one(*i, coeffs)))
    }

    /// Load vector `f_j = ⟨Σ_{i∈σ} b_i λ_i, Ψ_j⟩` of the right-hand side built
    /// from the dual functionals of `sigma`.
    pub fn load_vector(&self, sigma: &[usize], b: &DVector<C64>, n: usize) -> DVector<C64> {
        let mut f = DVector::zeros(n);
        for (bi, i) in b.iter().zip(sigma) {
            for slot in self.carrier_dofs[*i].iter().flatten() {
                let j = slot.0;
                f[j] += bi * self.pairing(*i, j);
            }
        }
        f
    }
}
