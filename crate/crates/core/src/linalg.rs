//! Sparse storage, a banded Cholesky factorization and restarted GMRES.
//!
//! The FE matrices on the uniform mesh have at most seven nonzeros per row and,
//! with lexicographic DOF numbering, a half-bandwidth of `2^m`. That is small
//! enough for a direct banded factorization of the stiffness matrix at every
//! supported refinement level.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{FlatError, Result};

/// Symmetric matrix in compressed sparse row form (both triangles stored).
#[derive(Clone, Debug, PartialEq)]
pub struct SymSparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymSparseMatrix {
    /// Builds the matrix from `(row, col, value)` contributions; duplicates are summed.
    ///
    /// The caller is responsible for symmetry of the contributions; assembly
    /// from symmetric element matrices gives it exactly.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Largest `|r - c|` over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        self.triplets().map(|(r, c, _)| r.abs_diff(c)).max().unwrap_or(0)
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.dim)
            .map(|r| self.row_ptr[r + 1] - self.row_ptr[r])
            .max()
            .unwrap_or(0)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim);
        DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()),
        )
    }

    /// `a * self + b * other`. Patterns may differ.
    pub fn lin_comb(&self, a: f64, other: &SymSparseMatrix, b: f64) -> SymSparseMatrix {
        assert_eq!(self.dim, other.dim);
        let lhs = self.triplets().map(|(r, c, v)| (r, c, a * v));
        let rhs = other.triplets().map(|(r, c, v)| (r, c, b * v));
        SymSparseMatrix::from_triplets(self.dim, lhs.chain(rhs))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }

    /// Writes `row,col,value` triplets with a one-line header.
    pub fn write_csv<W: Write>(&self, out: W, header: &str) -> Result<()> {
        let mut out = out;
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "value"])?;
        for (r, c, v) in self.triplets() {
            w.write_record([r.to_string(), c.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite band matrix.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    // row i holds L[i][i-bw ..= i], left-padded with zeros near the top
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SymSparseMatrix) -> Result<Self> {
        let dim = a.dim();
        let bw = a.half_bandwidth();
        let width = bw + 1;
        let mut band = vec![0.0; dim * width];
        for (r, c, v) in a.triplets() {
            if c <= r {
                band[r * width + bw - (r - c)] = v;
            }
        }
        for i in 0..dim {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut sum = band[i * width + bw - (i - j)];
                for k in lo..j {
                    sum -= band[i * width + bw - (i - k)] * band[j * width + bw - (j - k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(FlatError::LinearAlgebra(format!(
                            "matrix not positive definite (pivot {sum:.3e} at row {i})"
                        )));
                    }
                    band[i * width + bw] = sum.sqrt();
                } else {
                    band[i * width + bw - (i - j)] = sum / band[j * width + bw];
                }
            }
        }
        Ok(Self { dim, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.band[i * (self.bw + 1) + self.bw - (i - j)]
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.clone();
        for i in 0..self.dim {
            let mut s = y[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = y.clone();
        for i in (0..self.dim).rev() {
            x[i] /= self.at(i, i);
            let xi = x[i];
            for k in i.saturating_sub(self.bw)..i {
                x[k] -= self.at(i, k) * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.backward(&self.forward(b))
    }
}

/// Outcome of a GMRES run.
#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: DVector<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Restarted GMRES(`restart`) for `A x = b` with a zero initial guess.
///
/// Stops once `‖b - A x‖₂ ≤ tol ‖b‖₂` or after `max_iter` inner iterations.
pub fn gmres(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return GmresOutcome {
            x,
            relative_residual: 0.0,
            iterations: 0,
        };
    }
    let mut total = 0;
    while total < max_iter {
        let r = b - apply(&x);
        let beta = r.norm();
        let rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
        basis.push(r / beta);
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut e = vec![0.0; m + 1];
        e[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&basis[k]);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let hik = q.dot(&w);
                    h[(i, k)] += hik;
                    w.axpy(-hik, q, 1.0);
                }
            }
            let hnext = w.norm();
            h[(k + 1, k)] = hnext;
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let denom = h[(k, k)].hypot(h[(k + 1, k)]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[(k, k)] / denom;
            sn[k] = h[(k + 1, k)] / denom;
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            e[k + 1] = -sn[k] * e[k];
            e[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            let rel = e[k + 1].abs() / bnorm;
            if rel <= tol || hnext == 0.0 {
                break;
            }
            basis.push(w / hnext);
        }
        // back substitution on the k_used x k_used triangle
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = e[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &basis[i], 1.0);
        }
        if k_used == 0 {
            break;
        }
    }
    let rel_true = (b - apply(&x)).norm() / bnorm;
    GmresOutcome {
        x,
        relative_residual: rel_true,
        iterations: total,
    }
}

/// Dense LU solve with a crude condition estimate from the pivots of `U`.
pub fn dense_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    let diag = lu.u().diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = if min == 0.0 { f64::INFINITY } else { max / min };
    if !(condition < 1e14) {
        return Err(FlatError::SingularOperator { condition });
    }
    lu.solve(b).ok_or(FlatError::SingularOperator { condition })
}
