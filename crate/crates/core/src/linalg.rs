//! Singular value decomposition through faer. nalgebra's dynamic SVD loses
//! accuracy on rank-deficient inputs (reconstruction errors near 1e-4 on 3x3
//! cross-products of planar triangles), which the Procrustes fit cannot absorb.

use nalgebra::{DMatrix, DVector};

use crate::error::{GplmError, Result};

/// Thin SVD `a = u diag(sigma) v^T`, singular values non-increasing.
#[derive(Debug, Clone)]
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(a: &DMatrix<f64>, context: &str) -> Result<Svd> {
    let mat = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = mat
        .thin_svd()
        .map_err(|e| GplmError::IllConditioned(format!("{context}: SVD failed ({e:?})")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Ok(Svd {
        u: DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        sigma: DVector::from_fn(s.nrows(), |i, _| s[i]),
        v: DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    })
}
