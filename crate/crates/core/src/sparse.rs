//! Minimal CSR sparse matrix tailored to nodal FEM operators.
//!
//! All operators assembled on one mesh share the node-adjacency sparsity
//! pattern, so linear combinations reduce to axpy over the value arrays.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build a zero matrix with the given pattern. Column indices must be
    /// sorted and unique within each row.
    pub fn from_pattern(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> CsrMatrix {
        assert_eq!(row_ptr.len(), n_rows + 1);
        assert_eq!(*row_ptr.last().unwrap(), col_idx.len());
        for r in 0..n_rows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            assert!(cols.windows(2).all(|w| w[0] < w[1]), "unsorted row {r}");
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Zero matrix sharing this matrix's pattern.
    pub fn zeros_like(&self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    /// Clone the pattern and adopt the given value array.
    pub fn with_values(&self, values: Vec<f64>) -> CsrMatrix {
        assert_eq!(values.len(), self.values.len());
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols);
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
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
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// Add `v` at (r, c); the position must exist in the pattern.
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k] += v,
            Err(_) => panic!("position ({r}, {c}) not in sparsity pattern"),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        let mut acc = 0.0;
        for (r, xr) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += xr * row;
        }
        acc
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for c in 0..self.n_cols {
            row_ptr[c + 1] = row_ptr[c] + counts[c];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn entry_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Row sums, i.e. A * 1.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    /// Column sums, i.e. 1^T A.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.values[k];
            }
        }
        out
    }

    /// Linear combination of same-pattern matrices.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let (_, first) = terms.first().expect("at least one term");
        let mut out = first.zeros_like();
        for &(coeff, m) in terms {
            if !m.same_pattern(first) {
                return Err(Error::ShapeMismatch(
                    "linear combination of matrices with different patterns".into(),
                ));
            }
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += coeff * v;
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        d
    }

    /// Iterate (row, col, value) over stored entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 2, 1.0),
                (1, 1, 3.0),
                (2, 0, -1.0),
                (2, 2, 4.0),
                (0, 2, 0.5), // duplicate accumulates
            ],
        )
    }

    #[test]
    fn triplets_accumulate_and_sort() {
        let m = sample();
        assert_eq!(m.nnz(), 5);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn matvec_and_bilinear_agree_with_dense() {
        let m = sample();
        let x = [1.0, 2.0, 3.0];
        let y = m.matvec_alloc(&x);
        assert_eq!(y, vec![2.0 + 4.5, 6.0, -1.0 + 12.0]);
        let q = m.bilinear(&x, &x);
        let dense = m.to_dense();
        let mut want = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                want += x[r] * dense[r][c] * x[c];
            }
        }
        assert!((q - want).abs() < 1e-14);
    }

    #[test]
    fn transpose_round_trip() {
        let m = sample();
        let t = m.transpose().transpose();
        assert!(m.same_pattern(&t));
        assert_eq!(m.values(), t.values());
        assert_eq!(m.transpose().get(2, 0), m.get(0, 2));
    }

    #[test]
    fn sums_match_dense() {
        let m = sample();
        assert_eq!(m.row_sums(), vec![3.5, 3.0, 3.0]);
        assert_eq!(m.col_sums(), vec![1.0, 3.0, 5.5]);
        assert!((m.entry_sum() - 9.5).abs() < 1e-15);
        assert_eq!(m.max_abs(), 4.0);
    }
}
