//! Minimal CSR sparse matrix used by the assembly routines, with a bridge to
//! `faer` for the direct solves.

use faer::sparse::{SparseColMat, Triplet};

/// Triplet accumulator. Entries are merged deterministically (stable sort by
/// row, then column, duplicates summed in insertion order) so that repeated
/// assemblies of the same data produce bitwise-identical matrices.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        assert!(nrows < u32::MAX as usize && ncols < u32::MAX as usize);
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        let mut b = Self::new(nrows, ncols);
        b.entries.reserve(cap);
        b
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row as u32, col as u32, value));
    }

    pub fn into_csr(mut self) -> CsrMatrix {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut counts = vec![0usize; self.nrows];
        let mut cols: Vec<u32> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(u32, u32)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                counts[r as usize] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        for i in 0..self.nrows {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] = acc;
        }
        y
    }

    /// Bilinear form `x^T A y`.
    pub fn quadratic(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.vals[k] * y[self.cols[k] as usize];
            }
            acc += x[r] * row;
        }
        acc
    }

    /// Largest `|A_ij - A_ji|` over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k] as usize;
                let v = self.vals[k];
                let vt = self.get(c, r);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        let cols = &self.cols[range.clone()];
        match cols.binary_search(&(col as u32)) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Linear combination `sum_i coeff_i * A_i` of structurally compatible
    /// matrices (patterns may differ).
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut builder = CooBuilder::new(nrows, ncols);
        for &(coeff, mat) in terms {
            assert_eq!(mat.nrows, nrows);
            assert_eq!(mat.ncols, ncols);
            for r in 0..nrows {
                for k in mat.row_ptr[r]..mat.row_ptr[r + 1] {
                    builder.push(r, mat.cols[k] as usize, coeff * mat.vals[k]);
                }
            }
        }
        builder.into_csr()
    }

    /// Coordinate-format text dump, one `row col value` per line.
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push_str(&format!("{} {} {:.16e}\n", r, self.cols[k], self.vals[k]));
            }
        }
        out
    }

    /// Convert into a `faer` column-major sparse matrix.
    pub fn to_faer(&self) -> SparseColMat<u32, f64> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push(Triplet::new(r as u32, self.cols[k], self.vals[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .expect("valid triplets")
    }

    /// Dense copy, for the small eigenvalue computations in the penalty
    /// calibration utility.
    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_merges_duplicates() {
        let mut b = CooBuilder::new(3, 3);
        b.push(2, 1, 1.0);
        b.push(0, 0, 2.0);
        b.push(2, 1, 0.5);
        b.push(1, 2, -1.0);
        let m = b.into_csr();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(2, 1), 1.5);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(1, 2), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn matvec_and_quadratic_agree() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 2.0);
        b.push(0, 1, 1.0);
        b.push(1, 1, 3.0);
        let m = b.into_csr();
        let x = vec![1.0, 2.0];
        let y = m.matvec(&x);
        assert_eq!(y, vec![4.0, 6.0]);
        let q = m.quadratic(&x, &x);
        assert_eq!(q, 1.0 * 4.0 + 2.0 * 6.0);
    }

    #[test]
    fn dump_is_deterministic() {
        let build = || {
            let mut b = CooBuilder::new(2, 2);
            b.push(1, 0, 0.25);
            b.push(0, 1, 0.5);
            b.into_csr()
        };
        assert_eq!(build().dump_coo(), build().dump_coo());
    }
}
