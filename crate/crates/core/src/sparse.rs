//! Compressed sparse row matrices with the handful of products the GCN
//! layers need.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 || indptr[rows] != indices.len() {
            return Err(Error::shape("csr", "row pointer does not match row count"));
        }
        if indices.len() != values.len() {
            return Err(Error::shape("csr", "index and value arrays differ in length"));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::shape("csr", "row pointer is not monotone"));
        }
        if let Some(&c) = indices.iter().find(|&&c| c >= cols) {
            return Err(Error::shape("csr", format!("column {c} out of range {cols}")));
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds a matrix from (row, col, value) entries; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if r >= rows || c >= cols {
                return Err(Error::shape(
                    "csr",
                    format!("entry ({r}, {c}) outside {rows}x{cols}"),
                ));
            }
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Self::new(rows, cols, indptr, indices, values)
    }

    pub fn from_dense(m: ArrayView2<f64>) -> Self {
        let (rows, cols) = m.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Block-diagonal stacking of the given matrices.
    pub fn block_diag(blocks: &[CsrMatrix]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let nnz = blocks.iter().map(|b| b.nnz()).sum();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        let mut col_offset = 0;
        for b in blocks {
            for i in 0..b.rows {
                let (idx, val) = b.row(i);
                indices.extend(idx.iter().map(|&c| c + col_offset));
                values.extend_from_slice(val);
                indptr.push(indices.len());
            }
            col_offset += b.cols;
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(p) => val[p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                out[[i, j]] += v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                indices[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr: counts,
            indices,
            values,
        }
    }

    /// `self · x`.
    pub fn matmul(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.cols {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} times {}x{}", self.rows, self.cols, x.nrows(), x.ncols()),
            ));
        }
        let d = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.rows * d];
        for (i, orow) in out.chunks_mut(d.max(1)).enumerate().take(self.rows) {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                let xrow = &xs[j * d..(j + 1) * d];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.rows, d), out).expect("shape"))
    }

    /// `selfᵀ · g`, computed by scattering rows without materializing the transpose.
    pub fn transpose_matmul(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        if g.nrows() != self.rows {
            return Err(Error::shape(
                "spmm_t",
                format!("({}x{})^T times {}x{}", self.rows, self.cols, g.nrows(), g.ncols()),
            ));
        }
        let d = g.ncols();
        let g = g.as_standard_layout();
        let gs = g.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.cols * d];
        for i in 0..self.rows {
            let grow = &gs[i * d..(i + 1) * d];
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                let orow = &mut out[j * d..(j + 1) * d];
                for (o, &gv) in orow.iter_mut().zip(grow) {
                    *o += v * gv;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.cols, d), out).expect("shape"))
    }

    /// Rows gathered in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &r in rows {
            let (idx, val) = self.row(r);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }

    /// Relabels columns through `map` (old column -> new column). Entries whose
    /// column maps to `usize::MAX` are dropped. Column order within each row is
    /// preserved only if `map` is monotone; rows are re-sorted otherwise.
    pub fn remap_columns(&self, map: &[usize], new_cols: usize) -> Self {
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        indptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.rows {
            scratch.clear();
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                let nj = map[j];
                if nj != usize::MAX {
                    scratch.push((nj, v));
                }
            }
            scratch.sort_by_key(|e| e.0);
            for &(j, v) in &scratch {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: self.rows,
            cols: new_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.values[p] = f(i, self.indices[p], self.values[p]);
            }
        }
        out
    }

    /// Scales each row to unit L1 norm; all-zero rows are left untouched.
    pub fn row_normalize_l1(&self) -> Self {
        let sums: Vec<f64> = (0..self.rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .collect();
        self.map_values(|i, _, v| if sums[i] > 0.0 { v / sums[i] } else { v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let d = array![[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]];
        let m = CsrMatrix::from_dense(d.view());
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(m.matmul(x.view()).unwrap(), d.dot(&x));
        let g = array![[1.0, -1.0], [0.5, 2.0]];
        assert_eq!(m.transpose_matmul(g.view()).unwrap(), d.t().dot(&g));
        assert_eq!(m.transpose().to_dense(), d.t().to_owned());
    }

    #[test]
    fn shape_errors() {
        let m = CsrMatrix::identity(3);
        assert!(m.matmul(Array2::<f64>::zeros((2, 2)).view()).is_err());
        assert!(m.transpose_matmul(Array2::<f64>::zeros((4, 2)).view()).is_err());
    }

    #[test]
    fn block_diag_and_select() {
        let a = CsrMatrix::identity(2);
        let b = CsrMatrix::from_dense(array![[0.0, 1.0], [1.0, 0.0]].view());
        let bd = CsrMatrix::block_diag(&[a, b]);
        assert_eq!(bd.rows(), 4);
        assert_eq!(bd.get(2, 3), 1.0);
        assert_eq!(bd.get(0, 2), 0.0);
        let s = bd.select_rows(&[3, 0, 3]);
        assert_eq!(s.rows(), 3);
        assert_eq!(s.get(0, 2), 1.0);
        assert_eq!(s.get(2, 2), 1.0);
    }
}
