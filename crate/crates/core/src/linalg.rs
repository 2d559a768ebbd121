//! Small dense/sparse helpers shared across modules.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

pub type C64 = Complex<f64>;

/// Row-wise accumulator for assembling sparse matrices. Entries are summed in
/// insertion order, so symmetric scatter patterns give bitwise symmetric results.
#[derive(Debug, Clone)]
pub struct Accumulator {
    ncols: usize,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl Accumulator {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { ncols, rows: vec![BTreeMap::new(); nrows] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.rows[i].entry(j).or_insert(0.0) += v;
    }

    pub fn into_csr(self) -> CsrMatrix<f64> {
        let nrows = self.rows.len();
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for row in self.rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        CsrMatrix::try_from_csr_data(nrows, self.ncols, offsets, cols, vals)
            .expect("accumulator produces sorted, in-range CSR data")
    }
}

pub fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            d[(i, *j)] = *v;
        }
    }
    d
}

pub fn csr_mul(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|row| row.col_indices().iter().zip(row.values()).map(|(j, v)| v * x[*j]).sum::<f64>()),
    )
}

pub fn csr_mul_c(a: &CsrMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|row| {
            row.col_indices()
                .iter()
                .zip(row.values())
                .fold(C64::new(0.0, 0.0), |acc, (j, v)| acc + x[*j] * *v)
        }),
    )
}

/// `aᵀ x` for a CSR matrix.
pub fn csr_tr_mul(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            y[*j] += v * x[i];
        }
    }
    y
}

pub fn frobenius(a: &CsrMatrix<f64>) -> f64 {
    a.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dense submatrix `a[rows, cols]`.
pub fn csr_submatrix(a: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut pos = vec![usize::MAX; a.ncols()];
    for (k, c) in cols.iter().enumerate() {
        pos[*c] = k;
    }
    let mut d = DMatrix::zeros(rows.len(), cols.len());
    for (r, i) in rows.iter().enumerate() {
        let row = a.row(*i);
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            if pos[*j] != usize::MAX {
                d[(r, pos[*j])] = *v;
            }
        }
    }
    d
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|v| C64::new(v, 0.0))
}

pub fn to_complex_vec(a: &DVector<f64>) -> DVector<C64> {
    a.map(|v| C64::new(v, 0.0))
}

/// Real part if every imaginary part is exactly zero.
pub fn as_real(a: &DMatrix<C64>) -> Option<DMatrix<f64>> {
    a.iter().all(|z| z.im == 0.0).then(|| a.map(|z| z.re))
}

pub fn max_abs(a: &DMatrix<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm by dense SVD.
pub fn spectral_norm(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Singular values sorted in nonincreasing order.
pub fn sorted_singular_values(a: &DMatrix<C64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = match as_real(a) {
        Some(r) => r.singular_values().iter().copied().collect(),
        None => a.clone().singular_values().iter().copied().collect(),
    };
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Thin SVD `a = U diag(s) Vᴴ` with `s` nonincreasing, computed by faer.
/// nalgebra's bidiagonal SVD recomposes some graded blocks of inverse
/// Galerkin matrices with errors far above round-off.
pub fn thin_svd(a: &DMatrix<C64>) -> Option<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    if a.is_empty() {
        return Some((DMatrix::zeros(a.nrows(), 0), Vec::new(), DMatrix::zeros(0, a.ncols())));
    }
    let (m, n) = a.shape();
    match as_real(a) {
        Some(r) => {
            let svd = faer::Mat::<f64>::from_fn(m, n, |i, j| r[(i, j)]).thin_svd().ok()?;
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            let k = s.nrows();
            Some((
                DMatrix::from_fn(m, k, |i, j| C64::new(u[(i, j)], 0.0)),
                (0..k).map(|i| s[i]).collect(),
                DMatrix::from_fn(k, n, |i, j| C64::new(v[(j, i)], 0.0)),
            ))
        }
        None => {
            let svd = faer::Mat::<C64>::from_fn(m, n, |i, j| a[(i, j)]).thin_svd().ok()?;
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            let k = s.nrows();
            Some((
                DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
                (0..k).map(|i| s[i].re).collect(),
                DMatrix::from_fn(k, n, |i, j| v[(j, i)].conj()),
            ))
        }
    }
}

/// Orthonormal nullspace basis of a matrix with its numerical rank.
#[derive(Debug, Clone)]
pub struct NullSpace {
    pub basis: DMatrix<C64>,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Absolute cut-off: `rel_tol · σ₁`.
    pub threshold: f64,
}

/// Nullspace from the trailing right singular vectors of a full SVD;
/// singular values at or below `rel_tol · σ₁` count as zero.
pub fn null_space(a: &DMatrix<C64>, rel_tol: f64) -> Option<NullSpace> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Some(NullSpace { basis: DMatrix::identity(n, n), singular_values: vec![], rank: 0, threshold: 0.0 });
    }
    let (s, v): (Vec<f64>, DMatrix<C64>) = match as_real(a) {
        Some(r) => {
            let svd = faer::Mat::<f64>::from_fn(m, n, |i, j| r[(i, j)]).svd().ok()?;
            let (s, v) = (svd.S().column_vector(), svd.V());
            ((0..s.nrows()).map(|i| s[i]).collect(), DMatrix::from_fn(n, n, |i, j| C64::new(v[(i, j)], 0.0)))
        }
        None => {
            let svd = faer::Mat::<C64>::from_fn(m, n, |i, j| a[(i, j)]).svd().ok()?;
            let (s, v) = (svd.S().column_vector(), svd.V());
            ((0..s.nrows()).map(|i| s[i].re).collect(), DMatrix::from_fn(n, n, |i, j| v[(i, j)]))
        }
    };
    let sigma1 = s.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * sigma1;
    let rank = if sigma1 > 0.0 { s.iter().filter(|x| **x > threshold).count() } else { 0 };
    Some(NullSpace { basis: v.columns(rank, n - rank).into_owned(), singular_values: s, rank, threshold })
}
