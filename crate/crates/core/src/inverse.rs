//! Dense inverses at desk scale, block singular values, rank sweeps of the
//! blockwise compressed inverse, decay fits, and the matrix-level transfer
//! identity between dual functionals and inverse blocks.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cluster::{sparsity_constant, BlockPartition, ClusterTree};
use crate::error::{Error, Result};
use crate::fem::{l2_project, DualBasis, GalerkinSystem};
use crate::field::VectorField;
use crate::hmatrix::{self, Factorized, PowerOptions};
use crate::linalg::{self, C64};
use crate::mesh::Mesh;

/// Condition estimate above which a dense inverse is rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Bound on `‖A·B − I‖_max` enforced after inversion.
pub const INVERSE_RESIDUAL: f64 = 1e-8;

/// LU factorization with partial pivoting, real when the matrix is.
#[derive(Debug, Clone)]
pub enum DenseSolver {
    Real(LU<f64, Dyn, Dyn>),
    Complex(LU<C64, Dyn, Dyn>),
}

impl DenseSolver {
    pub fn new(a: &DMatrix<C64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidInput(format!("matrix is {}x{}", a.nrows(), a.ncols())));
        }
        Ok(match linalg::as_real(a) {
            Some(r) => Self::Real(r.lu()),
            None => Self::Complex(a.clone().lu()),
        })
    }

    pub fn solve(&self, b: &DVector<C64>) -> Result<DVector<C64>> {
        let singular = || Error::Singular("LU factor has a zero pivot".into());
        match self {
            Self::Real(lu) => {
                let re = lu.solve(&b.map(|z| z.re)).ok_or_else(singular)?;
                let im = lu.solve(&b.map(|z| z.im)).ok_or_else(singular)?;
                Ok(re.zip_map(&im, C64::new))
            }
            Self::Complex(lu) => lu.solve(b).ok_or_else(singular),
        }
    }

    pub fn inverse(&self) -> Result<DMatrix<C64>> {
        let singular = || Error::Singular("LU factor has a zero pivot".into());
        match self {
            Self::Real(lu) => Ok(linalg::to_complex(&lu.try_inverse().ok_or_else(singular)?)),
            Self::Complex(lu) => lu.try_inverse().ok_or_else(singular),
        }
    }
}

fn norm1(a: &DMatrix<C64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `A⁻¹` by LU, rejected when `‖A‖₁‖A⁻¹‖₁ > 1e12` or `‖A·A⁻¹ − I‖_max > 1e-8`.
pub fn dense_inverse(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let b = DenseSolver::new(a)?.inverse().map_err(|_| Error::IllConditioned { condition: f64::INFINITY })?;
    let condition = norm1(a) * norm1(&b);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let n = a.nrows();
    let residual = linalg::max_abs(&(a * &b - DMatrix::identity(n, n)));
    if residual > INVERSE_RESIDUAL {
        return Err(Error::IllConditioned { condition });
    }
    Ok(b)
}

/// `max |B − Bᵀ| / max |B|`.
pub fn symmetry_defect(b: &DMatrix<C64>) -> f64 {
    let scale = linalg::max_abs(b);
    if scale == 0.0 {
        0.0
    } else {
        linalg::max_abs(&(b - b.transpose())) / scale
    }
}

/// Singular values of `B|τ×σ`, nonincreasing.
pub fn block_svd(b: &DMatrix<C64>, tree: &ClusterTree, tau: usize, sigma: usize) -> Result<Vec<f64>> {
    let block = hmatrix::extract(b, &tree.cluster(tau).indices, &tree.cluster(sigma).indices);
    let (_, s, _) = linalg::thin_svd(&block).ok_or_else(|| Error::SvdFailure(format!("block ({tau}, {sigma})")))?;
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockDecay {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub blocks: Vec<BlockDecay>,
    /// `max over far blocks of σ_k / ‖B‖₂`, `k = 1, 2, ...`.
    pub envelope: Vec<f64>,
    pub fit: DecayFit,
}

/// Singular values of every far block and fits of their relative envelope.
pub fn decay_report(b: &DMatrix<C64>, tree: &ClusterTree, partition: &BlockPartition) -> Result<DecayReport> {
    let mut blocks = Vec::with_capacity(partition.far.len());
    for (t, s) in &partition.far {
        blocks.push(BlockDecay {
            row: *t,
            col: *s,
            rows: tree.cluster(*t).len(),
            cols: tree.cluster(*s).len(),
            singular_values: block_svd(b, tree, *t, *s)?,
        });
    }
    let norm = linalg::spectral_norm(b);
    let len = blocks.iter().map(|d| d.singular_values.len()).max().unwrap_or(0);
    let envelope: Vec<f64> = (0..len)
        .map(|k| {
            let m = blocks.iter().filter_map(|d| d.singular_values.get(k)).fold(0.0, |a: f64, v| a.max(*v));
            if norm > 0.0 { m / norm } else { 0.0 }
        })
        .collect();
    let ks: Vec<f64> = (1..=envelope.len()).map(|k| k as f64).collect();
    let fit = if envelope.len() >= 4 { fit_decay(&ks, &envelope)? } else { DecayFit::skipped("fewer than four singular values") };
    Ok(DecayReport { blocks, envelope, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelFit {
    pub log_c: f64,
    /// `b` for the root-exponential model, `q` for the exponential one.
    pub rate: f64,
    /// Root-mean-square residual in natural-log space.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// `log e ≈ log C − b·r^{1/4}/ln(r+2)`.
    pub root_exponential: Option<ModelFit>,
    /// `log e ≈ log C + r·log q`.
    pub exponential: Option<ModelFit>,
    pub points_used: usize,
    pub notice: Option<String>,
}

impl DecayFit {
    fn skipped(why: &str) -> Self {
        Self { root_exponential: None, exponential: None, points_used: 0, notice: Some(why.to_string()) }
    }
}

/// Errors at or below this level are treated as round-off and left out of fits.
pub const FIT_FLOOR: f64 = 1e-14;

pub fn root_exponential_abscissa(r: f64) -> f64 {
    r.powf(0.25) / (r + 2.0).ln()
}

fn line_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let icpt = ym - slope * tm;
    let rms = (t.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (icpt, slope, rms)
}

/// Least-squares fits of both decay models to `(r, err)` pairs.
pub fn fit_decay(ranks: &[f64], errors: &[f64]) -> Result<DecayFit> {
    if ranks.len() != errors.len() {
        return Err(Error::InvalidInput("ranks and errors differ in length".into()));
    }
    if ranks.len() < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 data points, got {}", ranks.len())));
    }
    let pts: Vec<(f64, f64)> = ranks.iter().zip(errors).filter(|(_, e)| **e > FIT_FLOOR).map(|(r, e)| (*r, e.ln())).collect();
    if pts.is_empty() {
        return Ok(DecayFit::skipped("all errors at round-off floor; fit skipped"));
    }
    if pts.len() < 2 {
        return Ok(DecayFit::skipped("fewer than two errors above round-off floor; fit skipped"));
    }
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let r: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let t: Vec<f64> = r.iter().map(|v| root_exponential_abscissa(*v)).collect();
    let (c1, s1, res1) = line_fit(&t, &y);
    let (c2, s2, res2) = line_fit(&r, &y);
    Ok(DecayFit {
        root_exponential: Some(ModelFit { log_c: c1, rate: -s1, residual: res1 }),
        exponential: Some(ModelFit { log_c: c2, rate: s2.exp(), residual: res2 }),
        points_used: pts.len(),
        notice: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: usize,
    pub abs_err: f64,
    pub rel_err: f64,
    /// `max over far blocks of σ_{r+1}`.
    pub max_block_sigma: f64,
    /// `C_sp·(depth+1)·max_block_sigma`.
    pub bound_value: f64,
    pub scalars: usize,
    pub c_sp: usize,
    pub depth: usize,
    pub converged: bool,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// `‖B‖₂` estimate used for relative errors.
    pub norm: f64,
    pub fit: DecayFit,
}

/// Slack on the block-to-global bound.
pub const BOUND_SLACK: f64 = 1.000001;

/// Compresses `b` at each rank, measures `‖B − B_H‖₂`, and compares it with
/// `C_sp·(depth+1)·max σ_{r+1}`.
pub fn rank_sweep(
    b: &DMatrix<C64>,
    tree: &ClusterTree,
    partition: &BlockPartition,
    ranks: &[usize],
    opts: &PowerOptions,
) -> Result<Sweep> {
    let fac = Factorized::new(b, tree, partition)?;
    let c_sp = sparsity_constant(partition);
    let depth = tree.depth();
    let norm = hmatrix::spectral_norm_estimate(b, opts).estimate;
    let mut rows = Vec::with_capacity(ranks.len());
    for r in ranks {
        let h = fac.truncate(*r);
        let est = hmatrix::spectral_error(b, &h, opts)?;
        let sigma = fac.max_tail(*r);
        let bound_value = (c_sp * (depth + 1)) as f64 * sigma;
        rows.push(SweepRow {
            r: *r,
            abs_err: est.estimate,
            rel_err: if norm > 0.0 { est.estimate / norm } else { 0.0 },
            max_block_sigma: sigma,
            bound_value,
            scalars: h.storage_stats().scalars,
            c_sp,
            depth,
            converged: est.converged,
            within_bound: est.estimate <= bound_value * BOUND_SLACK,
        });
    }
    let fit = if rows.len() >= 4 {
        let rs: Vec<f64> = rows.iter().map(|row| row.r as f64).collect();
        let es: Vec<f64> = rows.iter().map(|row| row.rel_err).collect();
        fit_decay(&rs, &es)?
    } else {
        DecayFit::skipped("fewer than four ranks")
    };
    Ok(Sweep { rows, norm, fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferCheck {
    pub tau: usize,
    pub sigma: usize,
    pub samples: usize,
    /// Largest `‖Λ_τ(E_h) − B|τ×σ b‖ / max(1, ‖B|τ×σ b‖)`.
    pub max_defect: f64,
    /// Largest `‖f − b̂‖_∞` where `b̂` is `b` placed on `σ`.
    pub load_defect: f64,
    pub singular_values: Vec<f64>,
}

pub const TRANSFER_TOLERANCE: f64 = 1e-8;

impl TransferCheck {
    pub fn passed(&self) -> bool {
        self.max_defect <= TRANSFER_TOLERANCE && self.load_defect <= TRANSFER_TOLERANCE
    }
}

/// For random `b`, builds the load of `Σ bᵢλᵢ` over `σ`, solves, applies the
/// dual functionals of `τ` and compares with `B|τ×σ b`.
#[allow(clippy::too_many_arguments)]
pub fn transfer_check(
    solver: &DenseSolver,
    dual: &DualBasis,
    b_inv: &DMatrix<C64>,
    tree: &ClusterTree,
    tau: usize,
    sigma: usize,
    samples: usize,
    seed: u64,
) -> Result<TransferCheck> {
    let n = b_inv.nrows();
    let rows = &tree.cluster(tau).indices;
    let cols = &tree.cluster(sigma).indices;
    let block = hmatrix::extract(b_inv, rows, cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_defect = 0.0f64;
    let mut load_defect = 0.0f64;
    for _ in 0..samples {
        let b = DVector::from_fn(cols.len(), |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let f = dual.load_vector(cols, &b, n);
        let mut placed = DVector::zeros(n);
        for (v, j) in b.iter().zip(cols) {
            placed[*j] = *v;
        }
        load_defect = load_defect.max((&f - placed).camax());
        let e = solver.solve(&f)?;
        let lhs = dual.apply(&e, rows);
        let rhs = &block * &b;
        max_defect = max_defect.max((lhs - &rhs).norm() / rhs.norm().max(1.0));
    }
    Ok(TransferCheck {
        tau,
        sigma,
        samples,
        max_defect,
        load_defect,
        singular_values: block_svd(b_inv, tree, tau, sigma)?,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityReport {
    /// `‖E_h‖_{H(curl)}`.
    pub solution_norm: f64,
    /// `‖Π F‖_{L²}` of the `L²` projection of the source.
    pub source_norm: f64,
    pub ratio: f64,
}

/// Solves `A e = f` with `f_i = ⟨F, Ψ_i⟩` and reports the `H(curl)` norm of
/// the solution against the `L²` norm of the projected source.
pub fn galerkin_stability(
    mesh: &Mesh,
    system: &GalerkinSystem,
    field: &impl VectorField,
    degree: usize,
) -> Result<StabilityReport> {
    let proj = l2_project(mesh, system, field, degree)?;
    let solver = DenseSolver::new(&system.stiffness_dense())?;
    let e = solver.solve(&linalg::to_complex_vec(&proj.load))?;
    let k = system.curl_curl();
    let m = system.mass();
    let energy: f64 = (linalg::csr_mul_c(k, &e).dotc(&e) + linalg::csr_mul_c(m, &e).dotc(&e)).re;
    let source = linalg::csr_mul(m, &proj.coeffs).dot(&proj.coeffs);
    let solution_norm = energy.max(0.0).sqrt();
    let source_norm = source.max(0.0).sqrt();
    Ok(StabilityReport {
        solution_norm,
        source_norm,
        ratio: if source_norm > 0.0 { solution_norm / source_norm } else { 0.0 },
    })
}
