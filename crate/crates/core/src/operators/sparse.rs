//! Compressed sparse row storage for explicitly assembled operators.

use crate::par::{self, Execution};
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate entries are
    /// summed and explicit zeros are dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `r` as `(col, value)` pairs, sorted by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64], exec: Execution) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        par::map_range(exec, self.rows, |r| {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            acc
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let dst = next[c];
                indices[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Stacks `blocks` vertically; all blocks must share the column count.
    pub fn vstack(blocks: &[&SparseMatrix]) -> SparseMatrix {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack blocks must share column count");
            let offset = indices.len();
            indices.extend_from_slice(&b.indices);
            values.extend_from_slice(&b.values);
            indptr.extend(b.indptr[1..].iter().map(|p| p + offset));
        }
        SparseMatrix {
            rows: indptr.len() - 1,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// `diag(self^T * other)`: for each column `j`, `sum_i self[i,j] * other[i,j]`.
    pub fn column_dot_diag(&self, other: &SparseMatrix) -> Vector {
        let mut diag = Vector::zeros(self.cols);
        self.for_each_shared_entry(other, |_, c, va, vb| diag[c] += va * vb);
        diag
    }

    /// `diag(self * other^T)`: for each row `i`, `sum_j self[i,j] * other[i,j]`.
    pub fn row_dot_diag(&self, other: &SparseMatrix) -> Vector {
        let mut diag = Vector::zeros(self.rows);
        self.for_each_shared_entry(other, |r, _, va, vb| diag[r] += va * vb);
        diag
    }

    fn for_each_shared_entry(&self, other: &SparseMatrix, mut f: impl FnMut(usize, usize, f64, f64)) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for r in 0..self.rows {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            while let (Some(&(ca, va)), Some(&(cb, vb))) = (a.peek(), b.peek()) {
                match ca.cmp(&cb) {
                    std::cmp::Ordering::Less => {
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        f(r, ca, va, vb);
                        a.next();
                        b.next();
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            4,
            vec![(0, 1, 2.0), (2, 3, -1.0), (0, 1, 1.0), (1, 0, 4.0), (2, 0, 0.0)],
        )
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = sample();
        assert_eq!(m.nnz(), 3);
        let d = m.to_dense();
        assert_eq!(d[(0, 1)], 3.0);
        assert_eq!(d[(1, 0)], 4.0);
        assert_eq!(d[(2, 3)], -1.0);
    }

    #[test]
    fn transpose_matches_dense() {
        let m = sample();
        assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
    }

    #[test]
    fn vstack_and_product() {
        let m = sample();
        let s = SparseMatrix::vstack(&[&m, &m]);
        assert_eq!(s.rows(), 6);
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = s.mul_vec(&x, Execution::Sequential);
        assert_eq!(y, vec![6.0, 4.0, -4.0, 6.0, 4.0, -4.0]);
        assert_eq!(y, s.mul_vec(&x, Execution::Parallel));
    }

    #[test]
    fn column_dot_diag_matches_dense() {
        let m = sample();
        let other = SparseMatrix::from_triplets(3, 4, vec![(0, 1, 5.0), (2, 3, 2.0), (1, 2, 7.0)]);
        let dense = (m.to_dense().transpose() * other.to_dense()).diagonal();
        assert_eq!(m.column_dot_diag(&other), dense);
    }

    #[test]
    fn row_dot_diag_matches_dense() {
        let m = sample();
        let other = SparseMatrix::from_triplets(3, 4, vec![(0, 1, 5.0), (2, 3, 2.0), (2, 0, 7.0)]);
        let dense = (m.to_dense() * other.to_dense().transpose()).diagonal();
        assert_eq!(m.row_dot_diag(&other), dense);
    }
}
