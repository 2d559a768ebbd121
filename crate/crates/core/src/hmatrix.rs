//! Blockwise low-rank storage on a block partition, best blockwise
//! compression of a dense matrix, matrix-vector products, storage
//! accounting and power-iteration error estimates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cluster::{sparsity_constant, BlockPartition, ClusterTree};
use crate::error::{Error, Result};
use crate::linalg::{self, C64};

/// `X·Yᴴ` with `X` of size `|τ|×r`, `Y` of size `|σ|×r`.
#[derive(Debug, Clone)]
pub struct LowRankBlock {
    pub x: DMatrix<C64>,
    pub y: DMatrix<C64>,
}

impl LowRankBlock {
    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        &self.x * self.y.adjoint()
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.x * (self.y.adjoint() * v)
    }

    pub fn apply_adjoint(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.y * (self.x.adjoint() * v)
    }
}

#[derive(Debug, Clone)]
pub struct FarBlock {
    pub row: usize,
    pub col: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub factors: LowRankBlock,
    /// First discarded singular value (0 if none was discarded).
    pub tail: f64,
}

#[derive(Debug, Clone)]
pub struct NearBlock {
    pub row: usize,
    pub col: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub data: DMatrix<C64>,
}

/// Full singular value decomposition of one far block, kept so that several
/// ranks can be cut from the same factorization.
#[derive(Debug, Clone)]
pub struct BlockSvd {
    pub row: usize,
    pub col: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub u: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<C64>,
}

pub fn extract(d: &DMatrix<C64>, rows: &[usize], cols: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| d[(rows[i], cols[j])])
}

impl BlockSvd {
    pub fn compute(d: &DMatrix<C64>, tree: &ClusterTree, row: usize, col: usize) -> Result<Self> {
        let rows = tree.cluster(row).indices.clone();
        let cols = tree.cluster(col).indices.clone();
        let block = extract(d, &rows, &cols);
        let (u, singular_values, v_t) =
            linalg::thin_svd(&block).ok_or_else(|| Error::SvdFailure(format!("block ({row}, {col})")))?;
        Ok(Self { row, col, rows, cols, u, singular_values, v_t })
    }

    /// SVD of a standalone matrix, treated as one block with identity index maps.
    pub fn of_matrix(block: &DMatrix<C64>) -> Result<Self> {
        let (u, singular_values, v_t) = linalg::thin_svd(block)
            .ok_or_else(|| Error::SvdFailure(format!("{}x{} matrix", block.nrows(), block.ncols())))?;
        let rows = (0..block.nrows()).collect();
        let cols = (0..block.ncols()).collect();
        Ok(Self { row: 0, col: 0, rows, cols, u, singular_values, v_t })
    }

    pub fn max_rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `σ_{r+1}`, or 0 past the last singular value.
    pub fn tail(&self, r: usize) -> f64 {
        self.singular_values.get(r).copied().unwrap_or(0.0)
    }

    /// Best rank-`r` approximation; `X` has orthonormal columns and `Y = V_r Σ_r`.
    pub fn truncate(&self, r: usize) -> FarBlock {
        let r = r.min(self.max_rank());
        let x = self.u.columns(0, r).into_owned();
        let mut y = self.v_t.rows(0, r).adjoint();
        for k in 0..r {
            y.column_mut(k).scale_mut(self.singular_values[k]);
        }
        FarBlock {
            row: self.row,
            col: self.col,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            factors: LowRankBlock { x, y },
            tail: self.tail(r),
        }
    }

    /// Smallest rank with `σ_{r+1} ≤ tol·σ₁`.
    pub fn adaptive_rank(&self, tol: f64) -> usize {
        let s1 = self.tail(0);
        (0..=self.max_rank()).find(|r| self.tail(*r) <= tol * s1).unwrap_or(self.max_rank())
    }
}

/// Per-block SVDs of the far field together with verbatim near blocks.
#[derive(Debug, Clone)]
pub struct Factorized {
    n: usize,
    eta: f64,
    c_sp: usize,
    depth: usize,
    far: Vec<BlockSvd>,
    near: Vec<NearBlock>,
}

impl Factorized {
    pub fn new(d: &DMatrix<C64>, tree: &ClusterTree, partition: &BlockPartition) -> Result<Self> {
        let n = tree.n_dofs();
        if d.nrows() != n || d.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, partition expects {n}x{n}",
                d.nrows(),
                d.ncols()
            )));
        }
        let far = partition
            .far
            .iter()
            .map(|(t, s)| BlockSvd::compute(d, tree, *t, *s))
            .collect::<Result<Vec<_>>>()?;
        let near = partition
            .near
            .iter()
            .map(|(t, s)| {
                let rows = tree.cluster(*t).indices.clone();
                let cols = tree.cluster(*s).indices.clone();
                let data = extract(d, &rows, &cols);
                NearBlock { row: *t, col: *s, rows, cols, data }
            })
            .collect();
        Ok(Self { n, eta: partition.eta, c_sp: sparsity_constant(partition), depth: tree.depth(), far, near })
    }

    pub fn far_blocks(&self) -> &[BlockSvd] {
        &self.far
    }

    /// `max_{far} σ_{r+1}`.
    pub fn max_tail(&self, r: usize) -> f64 {
        self.far.iter().map(|b| b.tail(r)).fold(0.0, f64::max)
    }

    pub fn truncate(&self, r: usize) -> HMatrix {
        self.assemble(self.far.iter().map(|b| b.truncate(r)).collect())
    }

    pub fn truncate_adaptive(&self, tol: f64) -> HMatrix {
        self.assemble(self.far.iter().map(|b| b.truncate(b.adaptive_rank(tol))).collect())
    }

    fn assemble(&self, far: Vec<FarBlock>) -> HMatrix {
        HMatrix {
            n: self.n,
            eta: self.eta,
            c_sp: self.c_sp,
            depth: self.depth,
            far,
            near: self.near.clone(),
        }
    }
}

/// Each far block replaced by its rank-`min(r, dims)` truncated SVD, near
/// blocks copied.
pub fn compress_dense(d: &DMatrix<C64>, tree: &ClusterTree, partition: &BlockPartition, r: usize) -> Result<HMatrix> {
    Ok(Factorized::new(d, tree, partition)?.truncate(r))
}

/// Per far block, the smallest rank with `σ_{r+1} ≤ tol·σ₁`.
pub fn compress_adaptive(
    d: &DMatrix<C64>,
    tree: &ClusterTree,
    partition: &BlockPartition,
    tol: f64,
) -> Result<HMatrix> {
    Ok(Factorized::new(d, tree, partition)?.truncate_adaptive(tol))
}

#[derive(Debug, Clone)]
pub struct HMatrix {
    n: usize,
    eta: f64,
    c_sp: usize,
    depth: usize,
    far: Vec<FarBlock>,
    near: Vec<NearBlock>,
}

impl HMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn far_blocks(&self) -> &[FarBlock] {
        &self.far
    }

    pub fn near_blocks(&self) -> &[NearBlock] {
        &self.near
    }

    pub fn sparsity_constant(&self) -> usize {
        self.c_sp
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn max_rank(&self) -> usize {
        self.far.iter().map(|b| b.factors.rank()).max().unwrap_or(0)
    }

    /// Largest discarded singular value over the far field.
    pub fn max_tail(&self) -> f64 {
        self.far.iter().map(|b| b.tail).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &DVector<C64>) -> DVector<C64> {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        let mut y = DVector::zeros(self.n);
        for b in &self.near {
            let xs = DVector::from_iterator(b.cols.len(), b.cols.iter().map(|j| x[*j]));
            for (i, v) in b.rows.iter().zip((&b.data * xs).iter()) {
                y[*i] += v;
            }
        }
        for b in &self.far {
            let xs = DVector::from_iterator(b.cols.len(), b.cols.iter().map(|j| x[*j]));
            for (i, v) in b.rows.iter().zip(b.factors.apply(&xs).iter()) {
                y[*i] += v;
            }
        }
        y
    }

    /// `Hᴴ x`.
    pub fn matvec_adjoint(&self, x: &DVector<C64>) -> DVector<C64> {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        let mut y = DVector::zeros(self.n);
        for b in &self.near {
            let xs = DVector::from_iterator(b.rows.len(), b.rows.iter().map(|i| x[*i]));
            for (j, v) in b.cols.iter().zip((b.data.adjoint() * xs).iter()) {
                y[*j] += v;
            }
        }
        for b in &self.far {
            let xs = DVector::from_iterator(b.rows.len(), b.rows.iter().map(|i| x[*i]));
            for (j, v) in b.cols.iter().zip(b.factors.apply_adjoint(&xs).iter()) {
                y[*j] += v;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        let mut put = |rows: &[usize], cols: &[usize], m: &DMatrix<C64>| {
            for (a, i) in rows.iter().enumerate() {
                for (b, j) in cols.iter().enumerate() {
                    d[(*i, *j)] = m[(a, b)];
                }
            }
        };
        for b in &self.near {
            put(&b.rows, &b.cols, &b.data);
        }
        for b in &self.far {
            put(&b.rows, &b.cols, &b.factors.to_dense());
        }
        d
    }

    pub fn storage_stats(&self) -> StorageStats {
        let far_scalars: usize = self.far.iter().map(|b| b.factors.x.len() + b.factors.y.len()).sum();
        let near_scalars: usize = self.near.iter().map(|b| b.data.len()).sum();
        let r_max = self.max_rank();
        let size = std::mem::size_of::<C64>();
        StorageStats {
            far_scalars,
            near_scalars,
            scalars: far_scalars + near_scalars,
            bytes_far: far_scalars * size,
            bytes_near: near_scalars * size,
            r_max,
            bound: self.c_sp * (self.depth + 1) * r_max * self.n,
        }
    }

    pub fn manifest(&self) -> HMatrixManifest {
        let far = self.far.iter().map(|b| BlockEntry {
            row: b.row,
            col: b.col,
            rows: b.rows.len(),
            cols: b.cols.len(),
            far: true,
            rank: b.factors.rank(),
        });
        let near = self.near.iter().map(|b| BlockEntry {
            row: b.row,
            col: b.col,
            rows: b.rows.len(),
            cols: b.cols.len(),
            far: false,
            rank: b.rows.len().min(b.cols.len()),
        });
        HMatrixManifest {
            n: self.n,
            eta: self.eta,
            sparsity_constant: self.c_sp,
            depth: self.depth,
            storage: self.storage_stats(),
            blocks: far.chain(near).collect(),
        }
    }

    /// Text payload: one header line per block followed by its factors (far)
    /// or entries (near), row-major, `re im` pairs.
    pub fn write_payload<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dump = |w: &mut W, m: &DMatrix<C64>| -> std::io::Result<()> {
            for i in 0..m.nrows() {
                let line: Vec<String> = m.row(i).iter().map(|z| format!("{:e} {:e}", z.re, z.im)).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            Ok(())
        };
        for b in &self.far {
            writeln!(w, "far {} {} {} {} {}", b.row, b.col, b.rows.len(), b.cols.len(), b.factors.rank())?;
            dump(&mut w, &b.factors.x)?;
            dump(&mut w, &b.factors.y)?;
        }
        for b in &self.near {
            writeln!(w, "near {} {} {} {}", b.row, b.col, b.rows.len(), b.cols.len())?;
            dump(&mut w, &b.data)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StorageStats {
    pub far_scalars: usize,
    pub near_scalars: usize,
    pub scalars: usize,
    pub bytes_far: usize,
    pub bytes_near: usize,
    pub r_max: usize,
    /// `C_sp·(depth+1)·r_max·N`.
    pub bound: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub far: bool,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HMatrixManifest {
    pub n: usize,
    pub eta: f64,
    pub sparsity_constant: usize,
    pub depth: usize,
    pub storage: StorageStats,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerOptions {
    /// Relative change of the Rayleigh quotient that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 500, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub estimate: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on `EᴴE` for an operator given by its action and the
/// action of its adjoint. Returns the square root of the Rayleigh quotient.
pub fn power_norm(
    n: usize,
    apply: impl Fn(&DVector<C64>) -> DVector<C64>,
    apply_adjoint: impl Fn(&DVector<C64>) -> DVector<C64>,
    opts: &PowerOptions,
) -> SpectralEstimate {
    if n == 0 {
        return SpectralEstimate { estimate: 0.0, converged: true, iterations: 0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    x /= C64::new(x.norm(), 0.0);
    let mut prev = f64::NAN;
    let mut best = 0.0f64;
    for it in 1..=opts.max_iter {
        let y = apply(&x);
        let lambda = y.norm_squared();
        best = best.max(lambda);
        if lambda == 0.0 {
            return SpectralEstimate { estimate: 0.0, converged: true, iterations: it };
        }
        if (lambda - prev).abs() < opts.tol * lambda {
            return SpectralEstimate { estimate: lambda.sqrt(), converged: true, iterations: it };
        }
        prev = lambda;
        let z = apply_adjoint(&y);
        let zn = z.norm();
        if zn == 0.0 {
            return SpectralEstimate { estimate: lambda.sqrt(), converged: true, iterations: it };
        }
        x = z / C64::new(zn, 0.0);
    }
    SpectralEstimate { estimate: best.sqrt(), converged: false, iterations: opts.max_iter }
}

fn check_error_inputs(d: &DMatrix<C64>, h: &HMatrix, opts: &PowerOptions) -> Result<()> {
    if d.nrows() != h.len() || d.ncols() != h.len() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    Ok(())
}

/// `‖D − H‖₂` by power iteration on the assembled residual `E = D − H`.
/// Blocks stored verbatim cancel exactly, so an exact representation gives 0.
pub fn spectral_error(d: &DMatrix<C64>, h: &HMatrix, opts: &PowerOptions) -> Result<SpectralEstimate> {
    check_error_inputs(d, h, opts)?;
    let e = d - h.to_dense();
    let eh = e.adjoint();
    Ok(power_norm(h.len(), |x| &e * x, |y| &eh * y, opts))
}

/// `‖D − H‖₂` through `E x = D x − H x` without forming `E`.
pub fn spectral_error_matrix_free(d: &DMatrix<C64>, h: &HMatrix, opts: &PowerOptions) -> Result<SpectralEstimate> {
    check_error_inputs(d, h, opts)?;
    let dh = d.adjoint();
    Ok(power_norm(h.len(), |x| d * x - h.matvec(x), |y| &dh * y - h.matvec_adjoint(y), opts))
}

/// `‖D‖₂` by the same power iteration.
pub fn spectral_norm_estimate(d: &DMatrix<C64>, opts: &PowerOptions) -> SpectralEstimate {
    let dh = d.adjoint();
    power_norm(d.nrows(), |x| d * x, |y| &dh * y, opts)
}
