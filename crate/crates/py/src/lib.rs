//! Python module `hmx`: meshes, Galerkin systems, H-matrix rank sweeps and
//! the consistency checks of `hmx-core`.

use hmx_core::cluster::{build_block_partition, build_cluster_tree, sparsity_constant};
use hmx_core::fem::{assemble_system, commuting_check, dual_basis, DofMap, GalerkinSystem, NodalSpace, TetGeometry};
use hmx_core::field::PolyField;
use hmx_core::harmonic::{caccioppoli_ratio, harmonic_space, BoxRegion, Variant};
use hmx_core::hmatrix::{BlockSvd, PowerOptions};
use hmx_core::inverse::{dense_inverse, rank_sweep};
use hmx_core::linalg;
use hmx_core::mesh::{build_box_mesh, Mesh};
use hmx_core::C64;
use nalgebra::{DMatrix, DVector, Point3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: hmx_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable report into plain Python dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_rows(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<C64>]) -> PyResult<DMatrix<C64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// Kuhn tetrahedral mesh of the cube `[0, side]³`.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    inner: Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (n, side = 1.0))]
    fn new(n: usize, side: f64) -> PyResult<Self> {
        Ok(Self { inner: build_box_mesh(n, side).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.subdivisions()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.mesh_width()
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.vertices().len()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.edges().len()
    }

    #[getter]
    fn num_tets(&self) -> usize {
        self.inner.tets().len()
    }

    /// Number of interior edges (unknowns).
    #[getter]
    fn num_dofs(&self) -> usize {
        DofMap::new(&self.inner).len()
    }

    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices().iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    fn tets(&self) -> Vec<[usize; 4]> {
        self.inner.tets().to_vec()
    }

    fn edges(&self) -> Vec<[usize; 2]> {
        self.inner.edges().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(n={}, side={})", self.inner.subdivisions(), self.inner.side())
    }
}

/// Edge-element system `A = K − κ M` on the Kuhn mesh of the cube.
#[pyclass(name = "System", frozen)]
struct PySystem {
    mesh: Mesh,
    system: GalerkinSystem,
    nodal: NodalSpace,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (n, kappa = C64::new(1.0, 0.0), side = 1.0))]
    fn new(n: usize, kappa: C64, side: f64) -> PyResult<Self> {
        if kappa == C64::new(0.0, 0.0) {
            return Err(PyValueError::new_err("kappa must be nonzero"));
        }
        let mesh = build_box_mesh(n, side).map_err(err)?;
        let dofs = DofMap::new(&mesh);
        let system = assemble_system(&mesh, &dofs, kappa).map_err(err)?;
        let nodal = NodalSpace::new(&mesh).map_err(err)?;
        Ok(Self { mesh, system, nodal })
    }

    fn __len__(&self) -> usize {
        self.system.len()
    }

    #[getter]
    fn kappa(&self) -> C64 {
        self.system.kappa()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.mesh.mesh_width()
    }

    /// Dense `A` as a list of rows.
    fn stiffness(&self) -> Vec<Vec<C64>> {
        to_rows(&self.system.stiffness_dense())
    }

    /// `(row, col, value)` triplets of the curl-curl matrix.
    fn curl_curl(&self) -> Vec<(usize, usize, f64)> {
        self.system.curl_curl().triplet_iter().map(|(i, j, v)| (i, j, *v)).collect()
    }

    /// `(row, col, value)` triplets of the mass matrix.
    fn mass(&self) -> Vec<(usize, usize, f64)> {
        self.system.mass().triplet_iter().map(|(i, j, v)| (i, j, *v)).collect()
    }

    /// `A x`.
    fn apply(&self, x: Vec<C64>) -> PyResult<Vec<C64>> {
        if x.len() != self.system.len() {
            return Err(PyValueError::new_err(format!("expected {} entries, got {}", self.system.len(), x.len())));
        }
        Ok(self.system.apply(&DVector::from_vec(x)).iter().copied().collect())
    }

    /// Dense `A⁻¹` as a list of rows.
    fn inverse(&self) -> PyResult<Vec<Vec<C64>>> {
        Ok(to_rows(&dense_inverse(&self.system.stiffness_dense()).map_err(err)?))
    }

    /// Compresses `A⁻¹` at every rank and returns the measured errors, the
    /// block-to-global bound and both decay fits.
    #[pyo3(signature = (eta = 2.0, n_leaf = 32, ranks = vec![1, 2, 4, 8, 12, 16, 20]))]
    fn rank_sweep<'py>(
        &self,
        py: Python<'py>,
        eta: f64,
        n_leaf: usize,
        ranks: Vec<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let b = dense_inverse(&self.system.stiffness_dense()).map_err(err)?;
        let tree = build_cluster_tree(&self.mesh, self.system.dofs(), n_leaf).map_err(err)?;
        let partition = build_block_partition(&tree, eta).map_err(err)?;
        let sweep = rank_sweep(&b, &tree, &partition, &ranks, &PowerOptions::default()).map_err(err)?;
        let out = to_py(py, &sweep)?;
        out.set_item("far_blocks", partition.far.len())?;
        out.set_item("sparsity_constant", sparsity_constant(&partition))?;
        out.set_item("depth", tree.depth())?;
        Ok(out)
    }

    /// Caccioppoli ratio for `variant` in {"curl", "grad"} on the interior
    /// (`region="interior"`) or boundary-touching box pair.
    #[pyo3(signature = (variant = "curl", region = "interior"))]
    fn caccioppoli<'py>(&self, py: Python<'py>, variant: &str, region: &str) -> PyResult<Bound<'py, PyAny>> {
        let variant: Variant = variant.parse().map_err(|_| PyValueError::new_err(format!("unknown variant {variant:?}")))?;
        let region = match region {
            "interior" => BoxRegion::interior(),
            "boundary" | "boundary-touching" => BoxRegion::boundary_touching(),
            other => return Err(PyValueError::new_err(format!("unknown region {other:?}"))),
        };
        let space = harmonic_space(&self.mesh, &self.system, &self.nodal, &region.outer(), variant).map_err(err)?;
        let report = caccioppoli_ratio(&self.mesh, self.system.dofs(), &self.nodal, &space, &region).map_err(err)?;
        to_py(py, &report)
    }
}

/// Rank-`r` truncated SVD of `matrix`: returns `(‖D − D_r‖₂, σ_{r+1})`.
#[pyfunction]
fn block_truncation(matrix: Vec<Vec<C64>>, r: usize) -> PyResult<(f64, f64)> {
    let d = from_rows(&matrix)?;
    let svd = BlockSvd::of_matrix(&d).map_err(err)?;
    let approx = svd.truncate(r).factors.to_dense();
    Ok((linalg::spectral_norm(&(&d - approx)), svd.tail(r)))
}

/// Largest commuting-diagram residual of a random polynomial field of the
/// given degree on the tetrahedron with vertices `points`.
#[pyfunction]
#[pyo3(signature = (points, degree = 3, seed = 0))]
fn commuting_residual(points: [[f64; 3]; 4], degree: u32, seed: u64) -> PyResult<f64> {
    use rand::SeedableRng;
    let geo = TetGeometry::new(points.map(|p| Point3::new(p[0], p[1], p[2]))).map_err(err)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok(commuting_check(&geo, &PolyField::random(degree, &mut rng)))
}

/// `max |⟨λ_i, Ψ_j⟩ − δ_ij|` and `max_i ‖λ_i‖ h^{1/2}` for the dual basis on
/// the mesh with `n` subdivisions.
#[pyfunction]
#[pyo3(signature = (n, side = 1.0))]
fn dual_basis_check(n: usize, side: f64) -> PyResult<(f64, f64)> {
    let mesh = build_box_mesh(n, side).map_err(err)?;
    let basis = dual_basis(&mesh, &DofMap::new(&mesh)).map_err(err)?;
    let mut defect: f64 = 0.0;
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            defect = defect.max((basis.pairing(i, j) - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let top = (0..basis.len()).map(|i| basis.norm(i)).fold(0.0, f64::max);
    Ok((defect, top * mesh.mesh_width().sqrt()))
}

#[pymodule]
fn hmx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(block_truncation, m)?)?;
    m.add_function(wrap_pyfunction!(commuting_residual, m)?)?;
    m.add_function(wrap_pyfunction!(dual_basis_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
