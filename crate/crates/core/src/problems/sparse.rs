//! Compressed-row sparse matrices and power iteration.
//!
//! Matrices are assembled from coordinate triplets and stored in CSR form.
//! Symmetric matrices keep both triangles so that a matrix-vector product
//! never needs to branch on the triangle.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::vector::{check_dim, norm};
use crate::error::{Error, Result};

/// Seed of the start vector used by [`spectral_norm`].
pub const POWER_ITERATION_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

/// Coordinate-list view used for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplets {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from triplets. Duplicate coordinates are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Result<Self> {
        Self::assemble(n_rows, n_cols, rows, cols, vals, false)
    }

    /// Builds a matrix from triplets, summing values that share a coordinate.
    pub fn from_triplets_summing(
        n_rows: usize,
        n_cols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Result<Self> {
        Self::assemble(n_rows, n_cols, rows, cols, vals, true)
    }

    fn assemble(
        n_rows: usize,
        n_cols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
        sum_duplicates: bool,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidMatrix("dimensions must be positive".into()));
        }
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(Error::InvalidMatrix("triplet arrays differ in length".into()));
        }
        for (k, ((&r, &c), &v)) in rows.iter().zip(cols).zip(vals).enumerate() {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidMatrix(format!(
                    "entry {k} at ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { index: k });
            }
        }

        // Stable, so duplicates are summed in input order and assembly is
        // reproducible bit for bit.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&k| (rows[k], cols[k]));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(order.len());
        let mut out_vals = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let key = (rows[k], cols[k]);
            if last == Some(key) {
                if !sum_duplicates {
                    return Err(Error::InvalidMatrix(format!(
                        "duplicate entry at ({}, {})",
                        key.0, key.1
                    )));
                }
                *out_vals.last_mut().unwrap() += vals[k];
                continue;
            }
            row_ptr[key.0 + 1] += 1;
            col_idx.push(key.1);
            out_vals.push(vals[k]);
            last = Some(key);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }

        let mut m = Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            vals: out_vals,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let idx: Vec<usize> = (0..diag.len()).collect();
        Self::from_triplets(diag.len(), diag.len(), &idx, &idx, diag)
            .expect("diagonal triplets are valid")
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_triplets(n_rows, n_cols, &[], &[], &[]).expect("empty triplets are valid")
    }

    /// Builds a sparse matrix holding the nonzeros of a dense one.
    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                if dense[(i, j)] != 0.0 {
                    r.push(i);
                    c.push(j);
                    v.push(dense[(i, j)]);
                }
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), &r, &c, &v)
            .expect("dense matrix entries are valid triplets")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entrywise symmetry, determined at construction.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without dimension checks beyond debug assertions.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.n_rows).map(|i| x[i] * self.row_dot(i, x)).sum()
    }

    pub fn transpose(&self) -> Self {
        let (r, c, v) = self.triplet_arrays();
        Self::from_triplets(self.n_cols, self.n_rows, &c, &r, &v)
            .expect("transpose of a valid matrix is valid")
    }

    /// `BᵀB` for this matrix `B`.
    pub fn gram(&self) -> Self {
        let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j1, &v1) in cols.iter().zip(vals) {
                for (&j2, &v2) in cols.iter().zip(vals) {
                    r.push(j1);
                    c.push(j2);
                    v.push(v1 * v2);
                }
            }
        }
        if r.is_empty() {
            return Self::zeros(self.n_cols, self.n_cols);
        }
        Self::from_triplets_summing(self.n_cols, self.n_cols, &r, &c, &v)
            .expect("gram triplets are valid")
    }

    /// `C + Cᵀ` for a square matrix `C`.
    pub fn plus_transpose(&self) -> Result<Self> {
        check_dim(self.n_rows, self.n_cols)?;
        let (mut r, mut c, mut v) = self.triplet_arrays();
        let (rt, ct, vt) = (c.clone(), r.clone(), v.clone());
        r.extend(rt);
        c.extend(ct);
        v.extend(vt);
        if r.is_empty() {
            return Ok(Self::zeros(self.n_rows, self.n_cols));
        }
        Self::from_triplets_summing(self.n_rows, self.n_cols, &r, &c, &v)
    }

    /// `A + shift·I` for a square matrix.
    pub fn add_diagonal(&self, shift: f64) -> Result<Self> {
        check_dim(self.n_rows, self.n_cols)?;
        let (mut r, mut c, mut v) = self.triplet_arrays();
        for i in 0..self.n_rows {
            r.push(i);
            c.push(i);
            v.push(shift);
        }
        Self::from_triplets_summing(self.n_rows, self.n_cols, &r, &c, &v)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= factor);
        m
    }

    pub fn triplet_arrays(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            rows.extend(std::iter::repeat_n(i, self.row_ptr[i + 1] - self.row_ptr[i]));
        }
        (rows, self.col_idx.clone(), self.vals.clone())
    }

    pub fn to_triplets(&self) -> Triplets {
        let (rows, cols, vals) = self.triplet_arrays();
        Triplets { rows, cols, vals }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Dense principal submatrix `A[S, S]` for a sorted index set `S`.
    pub fn principal_submatrix(&self, indices: &[usize]) -> DMatrix<f64> {
        let p = indices.len();
        let mut sub = DMatrix::zeros(p, p);
        for (a, &i) in indices.iter().enumerate() {
            let (cols, vals) = self.row(i);
            // Merge the sorted row against the sorted index set.
            let (mut ci, mut si) = (0, 0);
            while ci < cols.len() && si < p {
                match cols[ci].cmp(&indices[si]) {
                    std::cmp::Ordering::Less => ci += 1,
                    std::cmp::Ordering::Greater => si += 1,
                    std::cmp::Ordering::Equal => {
                        sub[(a, si)] = vals[ci];
                        ci += 1;
                        si += 1;
                    }
                }
            }
        }
        sub
    }

    fn check_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| self.get(j, i) == v)
        })
    }
}

/// Spectral norm `‖A‖₂` of a symmetric matrix by power iteration.
///
/// The estimate `‖A v_k‖` with unit `v_k` is non-decreasing for symmetric
/// `A`. Iteration stops once the geometric tail of the remaining increments,
/// extrapolated from the last two, falls below `tol · estimate`.
pub fn spectral_norm(a: &SparseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !a.is_symmetric() {
        return Err(Error::InvalidMatrix("spectral_norm requires a symmetric matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let n = a.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    power_iterate(|x, y| a.matvec_into(x, y), &mut v, tol, max_iter)
}

/// Spectral norm of a small dense symmetric matrix by power iteration.
pub fn dense_spectral_norm(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    power_iterate(
        |x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            }
        },
        &mut v,
        tol,
        max_iter,
    )
}

fn power_iterate(
    apply: impl Fn(&[f64], &mut [f64]),
    v: &mut Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let nv = norm(v);
    if nv == 0.0 {
        return Ok(0.0);
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; v.len()];
    let mut estimate = 0.0f64;
    let mut prev_change = f64::INFINITY;
    let mut settled = 0;
    for _ in 0..max_iter {
        apply(v, &mut w);
        let lambda = norm(&w);
        if lambda == 0.0 {
            return Ok(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / lambda;
        }
        if estimate == 0.0 {
            // The first product only seeds the estimate.
            estimate = lambda;
            continue;
        }
        let change = lambda - estimate;
        estimate = estimate.max(lambda);
        let tail = if change <= f64::EPSILON * estimate {
            0.0
        } else {
            let ratio = change / prev_change;
            if ratio < 1.0 {
                change * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            }
        };
        prev_change = change.max(0.0);
        if tail <= tol * estimate {
            settled += 1;
            if settled >= 2 {
                return Ok(estimate);
            }
        } else {
            settled = 0;
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, estimate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(SparseMatrix::from_triplets(2, 2, &[2], &[0], &[1.0]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[0, 0], &[1, 1], &[1.0, 2.0]).is_err());
        let m = SparseMatrix::from_triplets_summing(2, 2, &[0, 0], &[1, 1], &[1.0, 2.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn symmetry_flag() {
        let s = SparseMatrix::from_triplets(2, 2, &[0, 1], &[1, 0], &[2.0, 2.0]).unwrap();
        assert!(s.is_symmetric());
        let ns = SparseMatrix::from_triplets(2, 2, &[0, 1], &[1, 0], &[2.0, 3.0]).unwrap();
        assert!(!ns.is_symmetric());
        assert!(ns.plus_transpose().unwrap().is_symmetric());
    }

    #[test]
    fn spectral_norm_of_diagonals() {
        let d = SparseMatrix::from_diagonal(&[3.0, 1.0]);
        assert!((spectral_norm(&d, 1e-6, 5000).unwrap() - 3.0).abs() <= 3e-6);
        let id = SparseMatrix::identity(5);
        assert!((spectral_norm(&id, 1e-6, 5000).unwrap() - 1.0).abs() <= 1e-6);
        // Opposite-sign extremes of equal magnitude.
        let pm = SparseMatrix::from_diagonal(&[-2.0, 2.0, 1.0]);
        assert!((spectral_norm(&pm, 1e-6, 5000).unwrap() - 2.0).abs() <= 2e-6);
    }

    #[test]
    fn spectral_norm_rejects_nonsymmetric() {
        let m = SparseMatrix::from_triplets(2, 2, &[0], &[1], &[1.0]).unwrap();
        assert!(matches!(spectral_norm(&m, 1e-6, 100), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn non_convergence_reports_estimate() {
        // Two eigenvalues 1 and 0.999: the gap is too small for 3 iterations.
        let d = SparseMatrix::from_diagonal(&[1.0, 0.999]);
        match spectral_norm(&d, 1e-12, 3) {
            Err(Error::NoConvergence { iterations, estimate }) => {
                assert_eq!(iterations, 3);
                assert!(estimate > 0.9 && estimate <= 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gram_and_submatrix() {
        // B = [[1, 2], [0, 3]] -> BᵀB = [[1, 2], [2, 13]]
        let b = SparseMatrix::from_triplets(2, 2, &[0, 0, 1], &[0, 1, 1], &[1.0, 2.0, 3.0]).unwrap();
        let g = b.gram();
        assert_eq!(g.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 13.0]));
        assert!(g.is_symmetric());
        let sub = g.principal_submatrix(&[1]);
        assert_eq!(sub[(0, 0)], 13.0);
        assert_eq!(g.quadratic_form(&[1.0, 1.0]), 18.0);
    }
}
