//! Discrete harmonic spaces on axis-aligned boxes and the local estimates
//! built on them: Caccioppoli ratios, local discrete Helmholtz splits and the
//! recovery of nodal potentials from discretely curl-free fields.

use std::collections::BTreeSet;

use nalgebra::{ComplexField, DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    gram_norm2, pi_nabla_project, DofMap, EdgeGram, GalerkinSystem, NodalGram, NodalSpace, RegionNodalSpace,
};
use crate::linalg::{self, C64};
use crate::mesh::Mesh;

/// Singular values below this fraction of the largest count as zero.
pub const NULLSPACE_TOL: f64 = 1e-10;
/// Largest admissible constraint residual of a harmonic basis column.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Relative diagonal shift applied when the outer Gram matrix is singular on the space.
pub const GRAM_SHIFT: f64 = 1e-14;
/// Relative residual above which a field is rejected as not curl-free.
pub const POTENTIAL_TOL: f64 = 1e-9;
/// Relative curl residual accepted by the potential recovery.
pub const CURL_FREE_TOL: f64 = 1e-10;

const INSIDE_TOL: f64 = 1e-12;

/// Closed axis-aligned cube `center ± side/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: [f64; 3],
    pub side: f64,
}

impl Cube {
    pub fn new(center: [f64; 3], side: f64) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("cube needs a finite center and positive side, got {side}")));
        }
        Ok(Self { center, side })
    }

    pub fn lower(&self) -> [f64; 3] {
        self.center.map(|c| c - 0.5 * self.side)
    }

    pub fn upper(&self) -> [f64; 3] {
        self.center.map(|c| c + 0.5 * self.side)
    }

    pub fn contains(&self, p: &Point3<f64>, tol: f64) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|k| p[k] >= lo[k] - tol && p[k] <= hi[k] + tol)
    }

    /// Tetrahedra lying in the closed cube.
    pub fn tets_inside(&self, mesh: &Mesh) -> Vec<usize> {
        let tol = INSIDE_TOL * mesh.side();
        (0..mesh.tets().len())
            .filter(|t| mesh.tet_points(*t).iter().all(|p| self.contains(p, tol)))
            .collect()
    }

    /// Tetrahedra whose intersection with the cube has positive volume; their
    /// union is the mesh-conforming region of the cube.
    pub fn tets_meeting(&self, mesh: &Mesh) -> Vec<usize> {
        let tol = INSIDE_TOL * mesh.side();
        (0..mesh.tets().len())
            .filter(|t| tet_meets_box(&mesh.tet_points(*t), &self.lower(), &self.upper(), tol))
            .collect()
    }

    /// Edge DOFs whose basis support lies in the closed cube.
    pub fn dofs_inside(&self, mesh: &Mesh, dofs: &DofMap) -> Vec<usize> {
        let inside = self.inside_flags(mesh);
        (0..dofs.len())
            .filter(|d| {
                mesh.support_tets(dofs.edge(*d))
                    .map(|ts| ts.iter().all(|t| inside[*t]))
                    .unwrap_or(false)
            })
            .collect()
    }

    /// Nodal DOFs whose hat-function support lies in the closed cube.
    pub fn nodes_inside(&self, mesh: &Mesh, nodal: &NodalSpace) -> Vec<usize> {
        let inside = self.inside_flags(mesh);
        (0..nodal.len())
            .filter(|k| mesh.vertex_tets(nodal.vertex(*k)).iter().all(|t| inside[*t]))
            .collect()
    }

    fn inside_flags(&self, mesh: &Mesh) -> Vec<bool> {
        let mut flags = vec![false; mesh.tets().len()];
        for t in self.tets_inside(mesh) {
            flags[t] = true;
        }
        flags
    }
}

/// Separating-axis test for a tetrahedron against a box; touching counts as
/// disjoint.
fn tet_meets_box(pts: &[Point3<f64>; 4], lo: &[f64; 3], hi: &[f64; 3], tol: f64) -> bool {
    let half = Vector3::new(0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1]), 0.5 * (hi[2] - lo[2]));
    let mid = Vector3::new(0.5 * (hi[0] + lo[0]), 0.5 * (hi[1] + lo[1]), 0.5 * (hi[2] + lo[2]));
    let edges: Vec<Vector3<f64>> = crate::mesh::LOCAL_EDGES.iter().map(|[a, b]| pts[*b] - pts[*a]).collect();
    let mut axes: Vec<Vector3<f64>> = vec![Vector3::x(), Vector3::y(), Vector3::z()];
    for [a, b, c] in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
        axes.push((pts[b] - pts[a]).cross(&(pts[c] - pts[a])));
    }
    for k in 0..3 {
        for e in &edges {
            axes.push(Vector3::ith(k, 1.0).cross(e));
        }
    }
    for axis in axes {
        let len = axis.norm();
        if len < 1e-14 {
            continue;
        }
        let a = axis / len;
        let (tmin, tmax) = pts
            .iter()
            .map(|p| p.coords.dot(&a))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let c = mid.dot(&a);
        let r = half.x * a.x.abs() + half.y * a.y.abs() + half.z * a.z.abs();
        if tmax.min(c + r) - tmin.max(c - r) <= tol {
            return false;
        }
    }
    true
}

/// Concentric cubes of sides `R` and `(1+ε)R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub center: [f64; 3],
    pub r: f64,
    pub eps: f64,
}

impl BoxRegion {
    pub fn new(center: [f64; 3], r: f64, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        Cube::new(center, r)?;
        Ok(Self { center, r, eps })
    }

    pub fn interior() -> Self {
        Self { center: [0.5, 0.5, 0.5], r: 0.4, eps: 0.5 }
    }

    pub fn boundary_touching() -> Self {
        Self { center: [0.1, 0.5, 0.5], r: 0.4, eps: 0.5 }
    }

    pub fn inner(&self) -> Cube {
        Cube { center: self.center, side: self.r }
    }

    pub fn outer(&self) -> Cube {
        Cube { center: self.center, side: (1.0 + self.eps) * self.r }
    }

    /// Cube of side `(1 + k ε) R`.
    pub fn scaled(&self, k: f64) -> Cube {
        Cube { center: self.center, side: (1.0 + k * self.eps) * self.r }
    }

    /// `h/R < ε/4`.
    pub fn hypothesis_holds(&self, h: f64) -> bool {
        h / self.r < self.eps / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Edge elements with `(A u)_i = 0` on DOFs supported in the cube.
    Curl,
    /// Interior nodal functions with `(L u)_i = 0` on nodes supported in the cube.
    Grad,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curl" => Ok(Self::Curl),
            "grad" => Ok(Self::Grad),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?} (use curl or grad)"))),
        }
    }
}

/// The full coefficient space is the direct sum of the nullspace of the
/// constraint rows restricted to the `local` coordinates (those touching the
/// mesh-conforming region) and the unconstrained remaining coordinates.
#[derive(Debug, Clone)]
pub struct HarmonicSpace {
    pub variant: Variant,
    pub region: Cube,
    pub n_global: usize,
    /// Global coordinates (edge or nodal DOFs) touching the mesh-conforming region.
    pub local: Vec<usize>,
    /// Constraint rows: coordinates whose support lies in the closed cube.
    pub constraints: Vec<usize>,
    /// Orthonormal nullspace basis in local coordinates.
    pub local_basis: DMatrix<C64>,
    pub rank: usize,
    /// Singular values of the constraint block, descending.
    pub singular_values: Vec<f64>,
    /// Absolute cut-off used for the rank.
    pub threshold: f64,
    /// Largest `|(C u)_i|` over basis columns.
    pub max_residual: f64,
}

impl HarmonicSpace {
    /// `N − rank`.
    pub fn dim(&self) -> usize {
        self.n_global - self.rank
    }

    /// Number of basis columns supported on the local coordinates.
    pub fn local_dim(&self) -> usize {
        self.local_basis.ncols()
    }

    /// Coordinates that the constraints never see.
    pub fn free_coordinates(&self) -> Vec<usize> {
        let local: BTreeSet<usize> = self.local.iter().copied().collect();
        (0..self.n_global).filter(|k| !local.contains(k)).collect()
    }

    /// Global column `k`: the first `local_dim` columns extend the local
    /// nullspace by zero, the rest are unit vectors of free coordinates.
    pub fn column(&self, k: usize) -> Result<DVector<C64>> {
        if k >= self.dim() {
            return Err(Error::InvalidInput(format!("column {k} out of range (dim {})", self.dim())));
        }
        let mut out = DVector::zeros(self.n_global);
        if k < self.local_dim() {
            for (i, g) in self.local.iter().enumerate() {
                out[*g] = self.local_basis[(i, k)];
            }
        } else {
            out[self.free_coordinates()[k - self.local_dim()]] = C64::new(1.0, 0.0);
        }
        Ok(out)
    }

    /// Global columns spanning the local part.
    pub fn local_columns(&self) -> impl Iterator<Item = DVector<C64>> + '_ {
        (0..self.local_dim()).map(|k| self.column(k).expect("local column in range"))
    }

    /// Dense `N × dim` basis.
    pub fn basis(&self) -> DMatrix<C64> {
        let mut b = DMatrix::zeros(self.n_global, self.dim());
        for (k, g) in self.local.iter().enumerate() {
            for j in 0..self.local_dim() {
                b[(*g, j)] = self.local_basis[(k, j)];
            }
        }
        for (j, g) in self.free_coordinates().into_iter().enumerate() {
            b[(g, self.local_dim() + j)] = C64::new(1.0, 0.0);
        }
        b
    }
}

/// Discrete harmonic functions on `region`: the curl variant constrains the
/// Galerkin rows, the grad variant the nodal Laplacian rows.
pub fn harmonic_space(
    mesh: &Mesh,
    system: &GalerkinSystem,
    nodal: &NodalSpace,
    region: &Cube,
    variant: Variant,
) -> Result<HarmonicSpace> {
    let tets = region.tets_meeting(mesh);
    if tets.is_empty() {
        return Err(Error::InvalidInput("region does not meet the domain".into()));
    }
    let (n_global, local, constraints, block) = match variant {
        Variant::Curl => {
            let gram = EdgeGram::new(mesh, system.dofs(), &tets)?;
            let rows = region.dofs_inside(mesh, system.dofs());
            let c = DMatrix::from_fn(rows.len(), gram.dofs.len(), |i, j| {
                system.stiffness_entry(rows[i], gram.dofs[j])
            });
            (system.len(), gram.dofs, rows, c)
        }
        Variant::Grad => {
            let gram = NodalGram::new(mesh, nodal, &tets)?;
            let rows = region.nodes_inside(mesh, nodal);
            let c = linalg::csr_submatrix(nodal.stiffness(), &rows, &gram.nodes);
            (nodal.len(), gram.nodes, rows, linalg::to_complex(&c))
        }
    };
    let ns = linalg::null_space(&block, NULLSPACE_TOL)
        .ok_or_else(|| Error::SvdFailure(format!("constraint block of {} rows", block.nrows())))?;
    let max_residual = if block.nrows() == 0 || ns.basis.ncols() == 0 {
        0.0
    } else {
        linalg::max_abs(&(&block * &ns.basis))
    };
    Ok(HarmonicSpace {
        variant,
        region: *region,
        n_global,
        local,
        constraints,
        local_basis: ns.basis,
        rank: ns.rank,
        singular_values: ns.singular_values,
        threshold: ns.threshold,
        max_residual,
    })
}

/// Gram matrix of `(h²/R²)‖D·‖² + (1/R²)‖·‖²` over a tet set, where `D` is
/// the curl (edge elements) or the gradient (nodal functions).
#[derive(Debug, Clone)]
pub struct TripleNorm {
    pub variant: Variant,
    pub h: f64,
    pub r: f64,
    pub tets: Vec<usize>,
    /// Global coordinates indexing `gram`.
    pub coords: Vec<usize>,
    pub gram: DMatrix<f64>,
}

impl TripleNorm {
    pub fn new(
        mesh: &Mesh,
        dofs: &DofMap,
        nodal: &NodalSpace,
        tets: &[usize],
        r: f64,
        variant: Variant,
    ) -> Result<Self> {
        let h = mesh.mesh_width();
        let (coords, d, m) = derivative_and_mass(mesh, dofs, nodal, tets, variant)?;
        let gram = d * (h * h / (r * r)) + m / (r * r);
        Ok(Self { variant, h, r, tets: tets.to_vec(), coords, gram })
    }

    /// `|||x|||` for coefficients indexed like `coords`.
    pub fn norm(&self, x: &DVector<C64>) -> f64 {
        gram_norm2(&self.gram, x).max(0.0).sqrt()
    }
}

type Grams = (Vec<usize>, DMatrix<f64>, DMatrix<f64>);

fn derivative_and_mass(
    mesh: &Mesh,
    dofs: &DofMap,
    nodal: &NodalSpace,
    tets: &[usize],
    variant: Variant,
) -> Result<Grams> {
    Ok(match variant {
        Variant::Curl => {
            let g = EdgeGram::new(mesh, dofs, tets)?;
            (g.dofs, g.curl, g.mass)
        }
        Variant::Grad => {
            let g = NodalGram::new(mesh, nodal, tets)?;
            (g.nodes, g.stiffness, g.mass)
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliReport {
    pub variant: Variant,
    pub region: BoxRegion,
    pub h: f64,
    pub inner_tets: usize,
    pub outer_tets: usize,
    /// Dimension of the local part of the space (the only part the quotient sees).
    pub space_dim: usize,
    /// Largest generalized Rayleigh quotient `‖D u‖²_inner / |||u|||²_outer`.
    pub rayleigh_max: f64,
    /// `sqrt(rayleigh_max)`: the constant in the norm inequality.
    pub ratio: f64,
    /// `ratio · ε/(1+ε)`.
    pub normalized: f64,
    /// Whether `h/R < ε/4`.
    pub hypothesis_holds: bool,
    /// Whether the outer Gram matrix needed the diagonal shift.
    pub shifted: bool,
}

/// Largest ratio of the derivative norm on the tets inside `B_R` to the
/// triple norm on the mesh-conforming region of `B_{(1+ε)R}`, over a space
/// built on `region.outer()`.
pub fn caccioppoli_ratio(
    mesh: &Mesh,
    dofs: &DofMap,
    nodal: &NodalSpace,
    space: &HarmonicSpace,
    region: &BoxRegion,
) -> Result<CaccioppoliReport> {
    if space.region != region.outer() {
        return Err(Error::InvalidInput("harmonic space must be built on the outer cube of the region".into()));
    }
    let variant = space.variant;
    let h = mesh.mesh_width();
    let inner = region.inner().tets_inside(mesh);
    let outer = region.outer().tets_meeting(mesh);
    let mut report = CaccioppoliReport {
        variant,
        region: *region,
        h,
        inner_tets: inner.len(),
        outer_tets: outer.len(),
        space_dim: space.local_dim(),
        rayleigh_max: 0.0,
        ratio: 0.0,
        normalized: 0.0,
        hypothesis_holds: region.hypothesis_holds(h),
        shifted: false,
    };
    if inner.is_empty() || space.local_dim() == 0 {
        return Ok(report);
    }
    let norm = TripleNorm::new(mesh, dofs, nodal, &outer, region.outer().side, variant)?;
    if norm.coords != space.local {
        return Err(Error::InvalidInput("space and outer region disagree on local coordinates".into()));
    }
    let (inner_coords, inner_d, _) = derivative_and_mass(mesh, dofs, nodal, &inner, variant)?;
    let pos: std::collections::HashMap<usize, usize> =
        space.local.iter().enumerate().map(|(k, g)| (*g, k)).collect();
    let n = space.local.len();
    let mut numer = DMatrix::zeros(n, n);
    for (a, ga) in inner_coords.iter().enumerate() {
        for (b, gb) in inner_coords.iter().enumerate() {
            numer[(pos[ga], pos[gb])] = inner_d[(a, b)];
        }
    }
    let z = &space.local_basis;
    let (lambda, shifted) = match linalg::as_real(z) {
        Some(zr) => max_generalized_eig(zr.transpose() * numer * &zr, zr.transpose() * &norm.gram * &zr),
        None => {
            let zh = z.adjoint();
            max_generalized_eig(
                &zh * linalg::to_complex(&numer) * z,
                &zh * linalg::to_complex(&norm.gram) * z,
            )
        }
    };
    report.rayleigh_max = lambda.max(0.0);
    report.ratio = report.rayleigh_max.sqrt();
    report.normalized = report.ratio * region.eps / (1.0 + region.eps);
    report.shifted = shifted;
    Ok(report)
}

/// Largest eigenvalue of `B x = λ D x` for Hermitian `B` and Hermitian
/// positive (semi)definite `D`.
fn max_generalized_eig<T: ComplexField<RealField = f64>>(b: DMatrix<T>, d: DMatrix<T>) -> (f64, bool) {
    let n = d.nrows();
    if n == 0 {
        return (0.0, false);
    }
    let (chol, shifted) = match d.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let scale = (0..n).map(|i| d[(i, i)].clone().real()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let shifted = d + DMatrix::<T>::identity(n, n) * T::from_real(GRAM_SHIFT * scale);
            match shifted.cholesky() {
                Some(c) => (c, true),
                None => return (f64::INFINITY, true),
            }
        }
    };
    let l = chol.l();
    let x = l.solve_lower_triangular(&b).expect("triangular factor is nonsingular");
    let m = l.solve_lower_triangular(&x.adjoint()).expect("triangular factor is nonsingular");
    let m = (&m + m.adjoint()) * T::from_real(0.5);
    let top = m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (top, shifted)
}

/// Local discrete Helmholtz split `E = z + ∇p` on a region.
#[derive(Debug, Clone)]
pub struct HelmholtzSplit {
    /// Local edge coefficients of `E` (indexed like `space.edges.dofs`).
    pub field: DVector<C64>,
    pub z: DVector<C64>,
    pub gradient: DVector<C64>,
    /// Local nodal values of `p` (indexed like `space.nodes.nodes`).
    pub potential: DVector<C64>,
    /// `max_a |⟨z, ∇φ_a⟩| / (‖E‖ ‖∇φ_a‖)` over the local nodes.
    pub orthogonality: f64,
    /// `|‖E‖² − ‖z‖² − ‖∇p‖²| / ‖E‖²` over the region.
    pub pythagoras: f64,
}

/// `∇p = Π^∇ E` and `z = E − ∇p` on the region of `space`.
pub fn local_helmholtz(space: &RegionNodalSpace, coeffs: &DVector<C64>) -> HelmholtzSplit {
    let field = space.edges.restrict(coeffs);
    let potential = pi_nabla_project(space, coeffs);
    let gradient = space.gradient_of(&potential);
    let z = &field - &gradient;
    let e2 = gram_norm2(&space.edges.mass, &field);
    let (orthogonality, pythagoras) = if e2 > 0.0 {
        let load = space.gradient_load(&z);
        let gram = space.gram();
        let orth = (0..load.len())
            .filter(|a| gram[(*a, *a)] > 0.0)
            .map(|a| load[a].norm() / (e2.sqrt() * gram[(a, a)].sqrt()))
            .fold(0.0, f64::max);
        let z2 = gram_norm2(&space.edges.mass, &z);
        let g2 = gram_norm2(&space.edges.mass, &gradient);
        (orth, (e2 - z2 - g2).abs() / e2)
    } else {
        (0.0, 0.0)
    };
    HelmholtzSplit { field, z, gradient, potential, orthogonality, pythagoras }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradientPartCheck {
    /// `max_a |⟨∇p, ∇φ_a⟩| / (‖E‖ ‖∇φ_a‖)` over the test nodes.
    pub residual: f64,
    /// Number of test nodes.
    pub tests: usize,
}

/// Tests whether the gradient part `∇p = Π^∇ E` is discretely harmonic
/// against the hat functions of interior vertices whose support lies in the
/// closed cube `test_box`.
pub fn gradient_part_harmonic_check(
    mesh: &Mesh,
    nodal: &NodalSpace,
    space: &RegionNodalSpace,
    test_box: &Cube,
    coeffs: &DVector<C64>,
) -> GradientPartCheck {
    let tests: Vec<usize> = test_box
        .nodes_inside(mesh, nodal)
        .into_iter()
        .filter_map(|k| space.nodes.local_index(k))
        .collect();
    let e2 = gram_norm2(&space.edges.mass, &space.edges.restrict(coeffs));
    if e2 == 0.0 || tests.is_empty() {
        return GradientPartCheck { residual: 0.0, tests: tests.len() };
    }
    let p = pi_nabla_project(space, coeffs);
    let gram = space.gram();
    let gp = linalg::to_complex(&gram) * p;
    let residual = tests
        .iter()
        .map(|a| gp[*a].norm() / (e2.sqrt() * gram[(*a, *a)].sqrt()))
        .fold(0.0, f64::max);
    GradientPartCheck { residual, tests: tests.len() }
}

/// Nodal potential `φ` with `∇φ = v` on a region.
#[derive(Debug, Clone)]
pub struct Potential {
    /// Mesh vertex ids of the region.
    pub vertices: Vec<usize>,
    /// Values at `vertices`; zero mean on the boundary vertices of the domain
    /// when the region touches it, zero mean overall otherwise.
    pub values: DVector<C64>,
    /// Mesh edge ids of the region.
    pub edges: Vec<usize>,
    /// `‖G φ − v‖ / ‖v‖` over the region's edges.
    pub residual: f64,
    /// `‖K v‖ / (‖K‖_F ‖v‖)` with the curl Gram over the region.
    pub curl_residual: f64,
}

/// Least-squares potential of a discretely curl-free field over the edges of
/// a tet set. Boundary edges carry the value zero.
pub fn exact_sequence_recover(
    mesh: &Mesh,
    dofs: &DofMap,
    tets: &[usize],
    coeffs: &DVector<C64>,
) -> Result<Potential> {
    if tets.is_empty() {
        return Err(Error::InvalidInput("empty region".into()));
    }
    if coeffs.len() != dofs.len() {
        return Err(Error::InvalidInput(format!("expected {} coefficients, got {}", dofs.len(), coeffs.len())));
    }
    let gram = EdgeGram::new(mesh, dofs, tets)?;
    let local = gram.restrict(coeffs);
    let vnorm = local.norm();
    let knorm = gram.curl.norm();
    let curl_residual = if vnorm == 0.0 || knorm == 0.0 {
        0.0
    } else {
        (linalg::to_complex(&gram.curl) * &local).norm() / (knorm * vnorm)
    };
    if curl_residual > CURL_FREE_TOL {
        return Err(Error::NotCurlFree(curl_residual));
    }
    let vertices: Vec<usize> = tets.iter().flat_map(|t| mesh.tets()[*t]).collect::<BTreeSet<_>>().into_iter().collect();
    let edges: Vec<usize> =
        tets.iter().flat_map(|t| mesh.tet_edges()[*t].map(|(e, _)| e)).collect::<BTreeSet<_>>().into_iter().collect();
    let vpos: std::collections::HashMap<usize, usize> = vertices.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let mut g = DMatrix::zeros(edges.len(), vertices.len());
    let mut rhs = DVector::<C64>::zeros(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let [a, b] = mesh.edges()[*e];
        g[(i, vpos[&b])] = 1.0;
        g[(i, vpos[&a])] = -1.0;
        if let Some(d) = dofs.dof(*e) {
            rhs[i] = coeffs[d];
        }
    }
    // Normal equations with vertex 0 pinned: the edge graph of a tet set is
    // connected, so the reduced graph Laplacian is positive definite.
    let lap = g.transpose() * &g;
    let nv = vertices.len();
    let reduced = lap.view((1, 1), (nv - 1, nv - 1)).into_owned();
    let chol = reduced.cholesky().ok_or_else(|| Error::Singular("edge graph of region is disconnected".into()))?;
    let gt = g.transpose();
    let solve = |r: DVector<f64>| {
        let b = &gt * r;
        let x = chol.solve(&b.rows(1, nv - 1).into_owned());
        DVector::from_fn(nv, |k, _| if k == 0 { 0.0 } else { x[k - 1] })
    };
    let re = solve(rhs.map(|z| z.re));
    let im = solve(rhs.map(|z| z.im));
    let mut values = DVector::from_fn(vertices.len(), |k, _| C64::new(re[k], im[k]));
    let anchor: Vec<usize> =
        (0..vertices.len()).filter(|k| mesh.is_boundary_vertex(vertices[*k])).collect();
    let anchor = if anchor.is_empty() { (0..vertices.len()).collect() } else { anchor };
    let shift = anchor.iter().map(|k| values[*k]).sum::<C64>() / anchor.len() as f64;
    values.add_scalar_mut(-shift);
    let fit = linalg::to_complex(&g) * &values - &rhs;
    let residual = if vnorm == 0.0 { fit.norm() } else { fit.norm() / vnorm };
    if residual > POTENTIAL_TOL {
        return Err(Error::NotCurlFree(residual));
    }
    Ok(Potential { vertices, values, edges, residual, curl_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_system, discrete_gradient};
    use crate::mesh::build_box_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        mesh: Mesh,
        system: GalerkinSystem,
        nodal: NodalSpace,
    }

    fn setup(n: usize, kappa: C64) -> Setup {
        let mesh = build_box_mesh(n, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        let system = assemble_system(&mesh, &dofs, kappa).unwrap();
        let nodal = NodalSpace::new(&mesh).unwrap();
        Setup { mesh, system, nodal }
    }

    fn random_c(n: usize, rng: &mut ChaCha8Rng) -> DVector<C64> {
        DVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn box_tet_queries() {
        let m = build_box_mesh(2, 1.0).unwrap();
        let whole = Cube::new([0.5; 3], 1.0).unwrap();
        assert_eq!(whole.tets_inside(&m).len(), 48);
        assert_eq!(whole.tets_meeting(&m).len(), 48);
        let corner = Cube::new([0.25; 3], 0.5).unwrap();
        assert_eq!(corner.tets_inside(&m).len(), 6);
        assert_eq!(corner.tets_meeting(&m).len(), 6);
        // A thin slab on the grid plane x = 0.5 only touches faces.
        let touching = Cube { center: [0.75, 0.5, 0.5], side: 0.5 };
        let meets = touching.tets_meeting(&m);
        assert!(meets.iter().all(|t| m.tet_points(*t).iter().all(|p| p.x >= 0.5 - 1e-12)));
        // A small cube around the centre meets every tet at the centre vertex.
        let tiny = Cube::new([0.5; 3], 0.01).unwrap();
        assert_eq!(tiny.tets_meeting(&m).len(), 24);
        assert!(tiny.tets_inside(&m).is_empty());
    }

    #[test]
    fn sat_agrees_with_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = build_box_mesh(3, 1.0).unwrap();
        for _ in 0..5 {
            let c = Cube::new([rng.random(), rng.random(), rng.random()], rng.random_range(0.1..0.6)).unwrap();
            let meets: BTreeSet<usize> = c.tets_meeting(&m).into_iter().collect();
            for t in 0..m.tets().len() {
                let p = m.tet_points(t);
                let hit = (0..400).any(|_| {
                    let mut b = [0.0; 4].map(|_| rng.random_range(0.0..1.0f64));
                    let s: f64 = b.iter().sum();
                    b.iter_mut().for_each(|x| *x /= s);
                    let q = Point3::from(p.iter().zip(&b).map(|(v, w)| v.coords * *w).sum::<Vector3<f64>>());
                    c.contains(&q, -1e-9)
                });
                if hit {
                    assert!(meets.contains(&t), "sampled interior point missed tet {t}");
                }
            }
        }
    }

    #[test]
    fn unconstrained_region_gives_everything() {
        let s = setup(3, C64::new(1.0, 0.0));
        let c = Cube::new([0.5; 3], 0.2).unwrap();
        let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &c, Variant::Curl).unwrap();
        assert!(sp.constraints.is_empty());
        assert_eq!(sp.dim(), s.system.len());
        let b = sp.basis();
        assert!((b.adjoint() * &b - DMatrix::identity(sp.dim(), sp.dim())).camax() < 1e-14);
    }

    #[test]
    fn whole_domain_curl_space_is_trivial() {
        let s = setup(3, C64::new(1.0, 0.0));
        let c = Cube::new([0.5; 3], 1.0).unwrap();
        let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &c, Variant::Curl).unwrap();
        assert_eq!(sp.constraints.len(), s.system.len());
        assert_eq!(sp.dim(), 0);
        let g = harmonic_space(&s.mesh, &s.system, &s.nodal, &c, Variant::Grad).unwrap();
        assert_eq!(g.dim(), 0);
    }

    #[test]
    fn basis_columns_satisfy_constraints() {
        for kappa in [C64::new(1.0, 0.0), C64::new(1.0, 0.5)] {
            let s = setup(4, kappa);
            let c = Cube::new([0.5; 3], 0.5).unwrap();
            for variant in [Variant::Curl, Variant::Grad] {
                let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &c, variant).unwrap();
                assert!(!sp.constraints.is_empty());
                assert!(sp.max_residual <= CONSTRAINT_TOL);
                assert!(sp.local_dim() > 0);
                let z = &sp.local_basis;
                assert!((z.adjoint() * z - DMatrix::identity(z.ncols(), z.ncols())).camax() < 1e-12);
                for u in sp.local_columns() {
                    let r = match variant {
                        Variant::Curl => s.system.apply(&u),
                        Variant::Grad => linalg::csr_mul_c(s.nodal.stiffness(), &u),
                    };
                    for i in &sp.constraints {
                        assert!(r[*i].norm() <= CONSTRAINT_TOL);
                    }
                }
                assert_eq!(sp.dim(), sp.n_global - sp.rank);
                assert_eq!(sp.dim(), sp.local_dim() + sp.free_coordinates().len());
            }
        }
    }

    // Oracle: dense complex SVD of the full constraint matrix.
    #[test]
    fn rank_matches_dense_oracle() {
        let s = setup(3, C64::new(2.0, 0.0));
        let c = Cube::new([0.4, 0.5, 0.5], 0.7).unwrap();
        let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &c, Variant::Curl).unwrap();
        let a = s.system.stiffness_dense();
        let rows = DMatrix::from_fn(sp.constraints.len(), a.ncols(), |i, j| a[(sp.constraints[i], j)]);
        let sv = rows.singular_values();
        let top = sv.max();
        let rank = sv.iter().filter(|x| **x > 1e-10 * top).count();
        assert_eq!(sp.rank, rank);
    }

    #[test]
    fn gradients_do_not_enter_the_curl_numerator() {
        let s = setup(6, C64::new(1.0, 0.0));
        let region = BoxRegion::interior();
        let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &region.outer(), Variant::Curl).unwrap();
        let rep = caccioppoli_ratio(&s.mesh, s.system.dofs(), &s.nodal, &sp, &region).unwrap();
        assert!(rep.inner_tets > 0 && rep.ratio > 0.0 && rep.ratio.is_finite());
        assert!(!rep.hypothesis_holds);
        let dofs = s.system.dofs();
        let g = discrete_gradient(&s.mesh, dofs, &s.nodal);
        let inner = EdgeGram::new(&s.mesh, dofs, &region.inner().tets_inside(&s.mesh)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = DVector::from_fn(s.nodal.len(), |_, _| rng.random_range(-1.0..1.0));
        let e = linalg::to_complex_vec(&g.apply(&q));
        assert!(gram_norm2(&inner.curl, &inner.restrict(&e)) < 1e-20);
    }

    // Oracle: the quotient of every individual basis column is below the maximum.
    #[test]
    fn ratio_bounds_every_column() {
        let s = setup(6, C64::new(1.0, 0.0));
        let region = BoxRegion::interior();
        for variant in [Variant::Curl, Variant::Grad] {
            let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &region.outer(), variant).unwrap();
            let rep = caccioppoli_ratio(&s.mesh, s.system.dofs(), &s.nodal, &sp, &region).unwrap();
            assert!(!rep.shifted);
            let norm =
                TripleNorm::new(&s.mesh, s.system.dofs(), &s.nodal, &region.outer().tets_meeting(&s.mesh), 0.6, variant)
                    .unwrap();
            let (coords, d, _) =
                derivative_and_mass(&s.mesh, s.system.dofs(), &s.nodal, &region.inner().tets_inside(&s.mesh), variant)
                    .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut best: f64 = 0.0;
            for _ in 0..20 {
                let w = random_c(sp.local_dim(), &mut rng);
                let u = sp.basis().columns(0, sp.local_dim()) * w;
                let num = gram_norm2(&d, &DVector::from_iterator(coords.len(), coords.iter().map(|c| u[*c])));
                let den = norm.norm(&DVector::from_iterator(norm.coords.len(), norm.coords.iter().map(|c| u[*c])));
                best = best.max(num / (den * den));
            }
            assert!(best <= rep.rayleigh_max * (1.0 + 1e-10));
            assert!(best > 0.0);
            assert!((rep.normalized - rep.ratio / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_inner_region_gives_zero() {
        let s = setup(4, C64::new(1.0, 0.0));
        let region = BoxRegion::interior();
        assert!(region.inner().tets_inside(&s.mesh).is_empty());
        let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &region.outer(), Variant::Curl).unwrap();
        let rep = caccioppoli_ratio(&s.mesh, s.system.dofs(), &s.nodal, &sp, &region).unwrap();
        assert_eq!(rep.ratio, 0.0);
        let wrong = harmonic_space(&s.mesh, &s.system, &s.nodal, &region.inner(), Variant::Curl).unwrap();
        assert!(caccioppoli_ratio(&s.mesh, s.system.dofs(), &s.nodal, &wrong, &region).is_err());
    }

    fn region_space(s: &Setup, cube: &Cube) -> RegionNodalSpace {
        let dofs = s.system.dofs();
        let g = discrete_gradient(&s.mesh, dofs, &s.nodal);
        RegionNodalSpace::new(&s.mesh, dofs, &s.nodal, &g, &cube.tets_meeting(&s.mesh)).unwrap()
    }

    #[test]
    fn helmholtz_reproduces_gradients() {
        let s = setup(3, C64::new(1.0, 0.0));
        let cube = Cube::new([0.5; 3], 0.6).unwrap();
        let space = region_space(&s, &cube);
        let g = discrete_gradient(&s.mesh, s.system.dofs(), &s.nodal);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_c(s.nodal.len(), &mut rng);
        let e = g.apply_c(&q);
        let split = local_helmholtz(&space, &e);
        assert!(split.z.camax() < 1e-12);
        assert!((&split.gradient - &split.field).camax() < 1e-12);
        let zero = local_helmholtz(&space, &DVector::zeros(s.system.len()));
        assert_eq!(zero.pythagoras, 0.0);
        assert_eq!(zero.potential.camax(), 0.0);
    }

    #[test]
    fn helmholtz_is_orthogonal_on_the_whole_domain() {
        let s = setup(3, C64::new(1.0, 0.0));
        let space = region_space(&s, &Cube::new([0.5; 3], 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = random_c(s.system.len(), &mut rng);
        let split = local_helmholtz(&space, &e);
        assert!(split.orthogonality < 1e-10);
        assert!(split.pythagoras < 1e-10);
        // E − ∇p is orthogonal to gradients, so projecting it again gives zero.
        let again = local_helmholtz(&space, &space.edges.extend(&split.z, s.system.len()));
        assert!(again.gradient.camax() < 1e-10 * split.field.camax());
    }

    #[test]
    fn gradient_part_of_harmonic_columns_is_harmonic() {
        let s = setup(4, C64::new(1.0, 0.0));
        for region in [BoxRegion::interior(), BoxRegion::boundary_touching()] {
            let cube = region.scaled(2.0);
            let sp = harmonic_space(&s.mesh, &s.system, &s.nodal, &cube, Variant::Curl).unwrap();
            let space = region_space(&s, &cube);
            let mut tests = 0;
            for u in sp.local_columns() {
                let check = gradient_part_harmonic_check(&s.mesh, &s.nodal, &space, &cube, &u);
                assert!(check.residual <= 1e-9, "{}", check.residual);
                tests = check.tests;
            }
            assert!(tests > 0);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let e = random_c(s.system.len(), &mut rng);
            assert!(gradient_part_harmonic_check(&s.mesh, &s.nodal, &space, &cube, &e).residual > 1e-3);
            let zero = DVector::zeros(s.system.len());
            assert_eq!(gradient_part_harmonic_check(&s.mesh, &s.nodal, &space, &cube, &zero).residual, 0.0);
        }
    }

    #[test]
    fn potentials_are_recovered() {
        let s = setup(4, C64::new(1.0, 0.0));
        let dofs = s.system.dofs();
        let g = discrete_gradient(&s.mesh, dofs, &s.nodal);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cube in [Cube::new([0.4, 0.5, 0.6], 0.5).unwrap(), Cube::new([0.1, 0.1, 0.5], 0.6).unwrap()] {
            let tets = cube.tets_meeting(&s.mesh);
            let q = random_c(s.nodal.len(), &mut rng);
            let v = g.apply_c(&q);
            let pot = exact_sequence_recover(&s.mesh, dofs, &tets, &v).unwrap();
            assert!(pot.residual < 1e-12);
            // Compare with q up to a constant (boundary vertices carry zero).
            let full = |v: usize| s.nodal.dof(v).map(|k| q[k]).unwrap_or_default();
            let shift = pot.values[0] - full(pot.vertices[0]);
            for (k, v) in pot.vertices.iter().enumerate() {
                assert!((pot.values[k] - full(*v) - shift).norm() < 1e-10);
            }
        }
        let zero = exact_sequence_recover(&s.mesh, dofs, &Cube::new([0.5; 3], 0.5).unwrap().tets_meeting(&s.mesh), &DVector::zeros(dofs.len())).unwrap();
        assert_eq!(zero.residual, 0.0);
        assert_eq!(zero.values.camax(), 0.0);
    }

    #[test]
    fn curl_carrying_fields_are_rejected() {
        let s = setup(3, C64::new(1.0, 0.0));
        let dofs = s.system.dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_c(dofs.len(), &mut rng);
        let tets = Cube::new([0.5; 3], 0.8).unwrap().tets_meeting(&s.mesh);
        assert!(matches!(exact_sequence_recover(&s.mesh, dofs, &tets, &v), Err(Error::NotCurlFree(_))));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("curl".parse::<Variant>().unwrap(), Variant::Curl);
        assert_eq!("grad".parse::<Variant>().unwrap(), Variant::Grad);
        assert!("div".parse::<Variant>().is_err());
        assert!(BoxRegion::new([0.5; 3], 0.4, 0.0).is_err());
        assert!(Cube::new([0.5; 3], -1.0).is_err());
    }
}
