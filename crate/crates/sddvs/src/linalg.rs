//! Dense and sparse linear-algebra kernels sized for desk-scale meshes:
//! compressed-sparse-row matrices assembled from triplet buffers, a banded LU
//! factorization with partial pivoting, and the usual norms.
//!
//! The band solver covers everything from 1D tridiagonal systems to the dense
//! interface matrices (where the bandwidth degenerates to the full dimension),
//! so there is a single factorization path with one residual contract.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use thiserror::Error;

/// Pivot threshold, relative to the largest matrix entry.
const PIVOT_GUARD: f64 = 1e-14;

static FACTORIZATION_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of matrix factorizations performed so far in this process.
/// Used by the online-phase tests to assert that evaluation paths never
/// factorize anything.
pub fn factorization_count() -> u64 {
    FACTORIZATION_COUNT.load(Ordering::Relaxed)
}

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("shape mismatch: {context} ({a} vs {b})")]
    ShapeMismatch { context: &'static str, a: usize, b: usize },
    #[error("singular matrix: pivot {pivot:e} below threshold at index {index}")]
    SingularMatrix { index: usize, pivot: f64 },
}

pub fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Coordinate-format accumulation buffer; duplicate entries are summed when
/// compressed, so finite-element assembly order does not matter.
#[derive(Debug, Clone)]
pub struct TripletBuffer {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new(nrows: usize, ncols: usize) -> TripletBuffer {
        TripletBuffer { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Compresses into CSR: sorted strictly increasing column indices within
    /// each row, duplicates summed, exact zeros dropped.
    pub fn finalize(mut self) -> SparseMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (r, c, v) in self.entries {
            if !col_idx.is_empty() && row_ptr[r + 1] > row_ptr[r] && *col_idx.last().unwrap() == c
            {
                // same row (row_ptr[r+1] tracks the open row) and same column
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr[r + 1] = col_idx.len();
        }
        // rows after the last nonzero row
        for r in 1..=self.nrows {
            if row_ptr[r] < row_ptr[r - 1] {
                row_ptr[r] = row_ptr[r - 1];
            }
        }
        // drop entries that summed to exactly zero
        let mut m = SparseMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values };
        m.drop_zeros();
        m
    }
}

/// Compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> SparseMatrix {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> SparseMatrix {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    fn drop_zeros(&mut self) {
        if !self.values.iter().any(|v| *v == 0.0) {
            return;
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.col_idx.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        range.map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::ShapeMismatch {
                context: "spmv",
                a: self.ncols,
                b: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y, 1.0);
        Ok(y)
    }

    /// y += alpha * A x, shapes already validated by the caller.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64], alpha: f64) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] += alpha * acc;
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut t = TripletBuffer::new(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push(c, r, v);
            }
        }
        t.finalize()
    }

    /// Extracts the submatrix rows x cols; the position maps give, per global
    /// index, the local index or None.
    pub fn restrict(&self, rows: &[Option<usize>], n_local_rows: usize, cols: &[Option<usize>], n_local_cols: usize) -> SparseMatrix {
        let mut t = TripletBuffer::new(n_local_rows, n_local_cols);
        for r in 0..self.nrows {
            let Some(lr) = rows[r] else { continue };
            for (c, v) in self.row(r) {
                if let Some(lc) = cols[c] {
                    t.push(lr, lc, v);
                }
            }
        }
        t.finalize()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d.data[r * self.ncols + c] += v;
            }
        }
        d
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> DenseMatrix {
        DenseMatrix { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] += v;
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) {
        debug_assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::ShapeMismatch {
                context: "dense matvec",
                a: self.ncols,
                b: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y, 1.0);
        Ok(y)
    }

    /// y += alpha * A x
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64], alpha: f64) {
        for r in 0..self.nrows {
            let row = &self.data[r * self.ncols..(r + 1) * self.ncols];
            y[r] += alpha * dot(row, x);
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// LU factorization in band storage with partial pivoting. Reusable across
/// any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    kl: usize,
    ku: usize,
    /// (2*kl + ku + 1) x n band storage, entry (i, j) at row kl + ku + i - j.
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl Factorization {
    fn band_index(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) * self.n + j
    }

    fn factor_band(
        n: usize,
        kl: usize,
        ku: usize,
        mut ab: Vec<f64>,
        amax: f64,
    ) -> Result<Factorization, LinalgError> {
        FACTORIZATION_COUNT.fetch_add(1, Ordering::Relaxed);
        let mut f = Factorization { n, kl, ku, ab: Vec::new(), ipiv: vec![0; n] };
        let width = kl + ku; // U fill extends to kl + ku superdiagonals
        let threshold = PIVOT_GUARD * amax.max(f64::MIN_POSITIVE);
        for j in 0..n {
            let i_hi = (j + kl).min(n - 1);
            // pivot search in column j
            let mut ip = j;
            let mut best = 0.0;
            for i in j..=i_hi {
                let v = ab[(kl + ku + i - j) * n + j].abs();
                if v > best {
                    best = v;
                    ip = i;
                }
            }
            f.ipiv[j] = ip;
            if best < threshold {
                return Err(LinalgError::SingularMatrix { index: j, pivot: best });
            }
            if ip != j {
                let c_hi = (j + width).min(n - 1);
                for c in j..=c_hi {
                    ab.swap((kl + ku + j - c) * n + c, (kl + ku + ip - c) * n + c);
                }
            }
            let piv = ab[(kl + ku) * n + j];
            for i in (j + 1)..=i_hi {
                let m = ab[(kl + ku + i - j) * n + j] / piv;
                ab[(kl + ku + i - j) * n + j] = m;
                if m != 0.0 {
                    let c_hi = (j + width).min(n - 1);
                    for c in (j + 1)..=c_hi {
                        let u = ab[(kl + ku + j - c) * n + c];
                        if u != 0.0 {
                            ab[(kl + ku + i - c) * n + c] -= m * u;
                        }
                    }
                }
            }
        }
        f.ab = ab;
        Ok(f)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::ShapeMismatch { context: "solve", a: self.n, b: b.len() });
        }
        let mut x = b.to_vec();
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        // forward substitution with the unit-lower factor, applying pivots
        for j in 0..n {
            let ip = self.ipiv[j];
            if ip != j {
                x.swap(ip, j);
            }
            let xj = x[j];
            if xj != 0.0 {
                for i in (j + 1)..=(j + kl).min(n.saturating_sub(1)) {
                    x[i] -= self.ab[self.band_index(i, j)] * xj;
                }
            }
        }
        // back substitution with U (bandwidth kl + ku)
        for j in (0..n).rev() {
            x[j] /= self.ab[self.band_index(j, j)];
            let xj = x[j];
            if xj != 0.0 {
                let i_lo = j.saturating_sub(kl + ku);
                for i in i_lo..j {
                    x[i] -= self.ab[self.band_index(i, j)] * xj;
                }
            }
        }
        Ok(x)
    }
}

/// Factorizes a square sparse matrix by banded LU with partial pivoting.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization, LinalgError> {
    if a.nrows != a.ncols {
        return Err(LinalgError::ShapeMismatch {
            context: "factorize requires a square matrix",
            a: a.nrows,
            b: a.ncols,
        });
    }
    let n = a.nrows;
    if n == 0 {
        return Ok(Factorization { n: 0, kl: 0, ku: 0, ab: Vec::new(), ipiv: Vec::new() });
    }
    let mut kl = 0usize;
    let mut ku = 0usize;
    for r in 0..n {
        for (c, _) in a.row(r) {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
    }
    let mut ab = vec![0.0; (2 * kl + ku + 1) * n];
    for r in 0..n {
        for (c, v) in a.row(r) {
            ab[(kl + ku + r - c) * n + c] = v;
        }
    }
    Factorization::factor_band(n, kl, ku, ab, a.max_abs())
}

/// Factorizes a square dense matrix; the band degenerates to the full
/// dimension, which makes this ordinary partial-pivoting LU.
pub fn factorize_dense(a: &DenseMatrix) -> Result<Factorization, LinalgError> {
    if a.nrows != a.ncols {
        return Err(LinalgError::ShapeMismatch {
            context: "factorize requires a square matrix",
            a: a.nrows,
            b: a.ncols,
        });
    }
    let n = a.nrows;
    if n == 0 {
        return Ok(Factorization { n: 0, kl: 0, ku: 0, ab: Vec::new(), ipiv: Vec::new() });
    }
    let (kl, ku) = (n - 1, n - 1);
    let mut ab = vec![0.0; (2 * kl + ku + 1) * n];
    for r in 0..n {
        for c in 0..n {
            ab[(kl + ku + r - c) * n + c] = a.get(r, c);
        }
    }
    Factorization::factor_band(n, kl, ku, ab, a.max_abs())
}

/// Convenience: factorize and solve in one call.
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    factorize(a)?.solve(b)
}

/// Union sparsity pattern of a family of same-shape sparse matrices, with
/// per-term scatter maps. Lets an affine operator be re-assembled at a new
/// parameter value in O(total nnz) without re-sorting triplets.
#[derive(Debug)]
pub struct UnionPattern {
    pattern: SparseMatrix,
    term_maps: Vec<Vec<usize>>,
}

impl UnionPattern {
    pub fn build(terms: &[&SparseMatrix]) -> UnionPattern {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].nrows, terms[0].ncols);
        let mut t = TripletBuffer::new(nrows, ncols);
        for m in terms {
            for r in 0..nrows {
                for (c, _) in m.row(r) {
                    // placeholder value; only the pattern matters
                    t.entries.push((r, c, 1.0));
                }
            }
        }
        let pattern = t.finalize();
        let mut term_maps = Vec::with_capacity(terms.len());
        for m in terms {
            let mut map = Vec::with_capacity(m.nnz());
            for r in 0..nrows {
                for (c, _) in m.row(r) {
                    let lo = pattern.row_ptr[r];
                    let hi = pattern.row_ptr[r + 1];
                    let k = lo + pattern.col_idx[lo..hi].binary_search(&c).unwrap();
                    map.push(k);
                }
            }
            term_maps.push(map);
        }
        UnionPattern { pattern, term_maps }
    }

    /// Sum of `weights[k] * terms[k]` over the union pattern.
    pub fn assemble(&self, terms: &[&SparseMatrix], weights: &[f64]) -> SparseMatrix {
        let mut out = self.pattern.clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for ((m, w), map) in terms.iter().zip(weights).zip(&self.term_maps) {
            let mut k = 0;
            for v in &m.values {
                out.values[map[k]] += w * v;
                k += 1;
            }
        }
        out
    }
}

/// Lazily-built union pattern cache for affine operators.
pub type PatternCell = OnceLock<UnionPattern>;
