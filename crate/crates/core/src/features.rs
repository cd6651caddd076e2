//! Node property matrices (one per view).

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A num_nodes × dim property matrix, stored sparse when that pays off
/// (bag-of-words features) and dense otherwise (random-walk embeddings).
#[derive(Debug, Clone, PartialEq)]
pub enum NodeFeatures {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

impl NodeFeatures {
    /// Picks the sparse representation when fewer than a quarter of entries are non-zero.
    pub fn from_dense_auto(m: Array2<f64>) -> Self {
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        if m.len() > 0 && nnz * 4 < m.len() {
            NodeFeatures::Sparse(CsrMatrix::from_dense(m.view()))
        } else {
            NodeFeatures::Dense(m)
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            NodeFeatures::Dense(m) => m.nrows(),
            NodeFeatures::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            NodeFeatures::Dense(m) => m.ncols(),
            NodeFeatures::Sparse(m) => m.cols(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            NodeFeatures::Dense(m) => m.clone(),
            NodeFeatures::Sparse(m) => m.to_dense(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        match self {
            NodeFeatures::Dense(m) => NodeFeatures::Dense(m.select(Axis(0), rows)),
            NodeFeatures::Sparse(m) => NodeFeatures::Sparse(m.select_rows(rows)),
        }
    }

    /// `self · w`.
    pub fn matmul(&self, w: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            NodeFeatures::Dense(m) => {
                if m.ncols() != w.nrows() {
                    return Err(Error::shape(
                        "matmul",
                        format!("{:?} times {:?}", m.dim(), w.dim()),
                    ));
                }
                Ok(m.dot(&w))
            }
            NodeFeatures::Sparse(m) => m.matmul(w),
        }
    }

    /// `selfᵀ · g`.
    pub fn transpose_matmul(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            NodeFeatures::Dense(m) => {
                if m.nrows() != g.nrows() {
                    return Err(Error::shape(
                        "matmul_t",
                        format!("{:?}^T times {:?}", m.dim(), g.dim()),
                    ));
                }
                Ok(m.t().dot(&g))
            }
            NodeFeatures::Sparse(m) => m.transpose_matmul(g),
        }
    }

    /// Unit L1 norm per row; zero rows stay zero.
    pub fn row_normalize(&self) -> Self {
        match self {
            NodeFeatures::Dense(m) => {
                let mut out = m.clone();
                for mut row in out.rows_mut() {
                    let s: f64 = row.iter().map(|v| v.abs()).sum();
                    if s > 0.0 {
                        row.mapv_inplace(|v| v / s);
                    }
                }
                NodeFeatures::Dense(out)
            }
            NodeFeatures::Sparse(m) => NodeFeatures::Sparse(m.row_normalize_l1()),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            NodeFeatures::Dense(m) => m.iter().all(|v| v.is_finite()),
            NodeFeatures::Sparse(m) => m.values().iter().all(|v| v.is_finite()),
        }
    }
}

impl From<Array2<f64>> for NodeFeatures {
    fn from(m: Array2<f64>) -> Self {
        NodeFeatures::Dense(m)
    }
}
