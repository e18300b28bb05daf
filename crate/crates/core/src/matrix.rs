//! Dense real-matrix primitives: SVD, rank-r projection, norms,
//! vectorization, and the scaled condition number.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative threshold below which a singular value is treated as zero when
/// forming the pseudo-inverse norm.
pub const RANK_TOL: f64 = 1e-10;

/// A dense real matrix with finite entries.
///
/// Thin wrapper around `nalgebra::DMatrix<f64>`; constructors reject NaN and
/// infinite entries so every downstream operation can assume finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    /// Build from row-major data.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::from_rows",
                expected: format!("{} entries", rows * cols),
                actual: format!("{}", data.len()),
            });
        }
        let m = DMatrix::from_row_slice(rows, cols, data);
        Self::from_dmatrix(m)
    }

    /// Wrap an existing nalgebra matrix, validating finiteness.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        Ok(Self { inner: m })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// `Tr(self^T other)`, the standard matrix inner product.
    pub fn trace_product(&self, other: &DenseMatrix) -> Result<f64> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::DimensionMismatch {
                context: "trace_product",
                expected: format!("{}x{}", self.rows(), self.cols()),
                actual: format!("{}x{}", other.rows(), other.cols()),
            });
        }
        Ok(self.inner.dot(&other.inner))
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            inner: &self.inner * alpha,
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            inner: &self.inner - &other.inner,
        }
    }

    /// Column-stacked vectorization: `vec(M)[i + j*rows] = M[i, j]`.
    pub fn vectorize(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    /// Inverse of [`vectorize`](Self::vectorize).
    pub fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "unvectorize",
                expected: format!("{} entries", rows * cols),
                actual: format!("{}", v.len()),
            });
        }
        Self::from_dmatrix(DMatrix::from_column_slice(rows, cols, v))
    }

    /// Thin SVD with singular values sorted in non-increasing order.
    pub fn svd(&self) -> Result<SvdFactorization> {
        let (rows, cols) = (self.rows(), self.cols());
        let m = faer::Mat::from_fn(rows, cols, |i, j| self.inner[(i, j)]);
        let svd = m.thin_svd();
        let (fu, fs, fv) = (svd.u(), svd.s_diagonal(), svd.v());
        let s: Vec<f64> = (0..fs.nrows()).map(|i| fs[i]).collect();
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::SvdNonConvergence { rows, cols });
        }

        // faer sorts descending, but do not rely on it.
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());

        let k = s.len();
        let mut u_sorted = DMatrix::zeros(rows, k);
        let mut vt_sorted = DMatrix::zeros(k, cols);
        let mut s_sorted = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            for i in 0..rows {
                u_sorted[(i, dst)] = fu[(i, src)];
            }
            for j in 0..cols {
                vt_sorted[(dst, j)] = fv[(j, src)];
            }
            s_sorted.push(s[src]);
        }
        Ok(SvdFactorization {
            u: DenseMatrix { inner: u_sorted },
            singular_values: s_sorted,
            vt: DenseMatrix { inner: vt_sorted },
        })
    }

    /// Best rank-`r` approximation: keep the `r` largest singular triplets.
    pub fn rank_r_project(&self, r: usize) -> Result<DenseMatrix> {
        if r == 0 {
            return Err(Error::RankOutOfRange {
                rank: 0,
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        let f = self.svd()?;
        if r >= f.singular_values.len() {
            return Ok(self.clone());
        }
        Ok(f.truncated(r))
    }

    /// Number of singular values above `RANK_TOL * sigma_max`.
    pub fn numerical_rank(&self) -> Result<usize> {
        let f = self.svd()?;
        let smax = f.singular_values.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return Ok(0);
        }
        let tol = RANK_TOL * smax;
        Ok(f.singular_values.iter().filter(|&&s| s > tol).count())
    }

    /// Scaled condition number `kappa(M) = ||M||_F * ||M^+||_2`, with
    /// singular values at or below `RANK_TOL * sigma_max` treated as zero.
    ///
    /// For matrices with min dimension above 256 the singular spectrum
    /// endpoints are obtained from the eigenvalues of the Gram matrix, which
    /// is much cheaper than a full SVD at the sizes the harness produces.
    pub fn scaled_condition_number(&self) -> Result<f64> {
        let fro = self.frobenius_norm();
        if fro == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let (smax, smin) = if self.rows().min(self.cols()) > 256 {
            self.extreme_singular_values_gram()
        } else {
            let f = self.svd()?;
            let smax = f.singular_values[0];
            let tol = RANK_TOL * smax;
            let smin = f
                .singular_values
                .iter()
                .copied()
                .rev()
                .find(|&s| s > tol)
                .unwrap_or(smax);
            (smax, smin)
        };
        if smax == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        Ok(fro / smin)
    }

    /// Largest and smallest retained singular values via the Gram matrix
    /// `G = M^T M` (or `M M^T`, whichever is smaller).
    fn extreme_singular_values_gram(&self) -> (f64, f64) {
        let g = if self.cols() <= self.rows() {
            gram_t(&self.inner)
        } else {
            gram_t(&self.inner.transpose())
        };
        let mut eigs: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let lmax = eigs.first().copied().unwrap_or(0.0).max(0.0);
        let smax = lmax.sqrt();
        let tol2 = (RANK_TOL * smax) * (RANK_TOL * smax);
        let lmin = eigs
            .iter()
            .copied()
            .rev()
            .find(|&l| l > tol2)
            .unwrap_or(lmax);
        (smax, lmin.max(0.0).sqrt())
    }
}

/// `A^T A` computed with a blocked dgemm.
fn gram_t(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = (a.nrows(), a.ncols());
    let mut g = DMatrix::<f64>::zeros(d, d);
    // nalgebra stores column-major: strides (1, nrows).
    unsafe {
        matrixmultiply::dgemm(
            d,
            n,
            d,
            1.0,
            a.as_slice().as_ptr(),
            n as isize, // A^T row stride
            1,
            a.as_slice().as_ptr(),
            1,
            n as isize,
            0.0,
            g.as_mut_slice().as_mut_ptr(),
            1,
            d as isize,
        );
    }
    g
}

/// Thin SVD `M = U diag(s) V^T` with `s` non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdFactorization {
    /// Reassemble `U diag(s) V^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.truncated(self.singular_values.len())
    }

    /// Reassemble keeping only the first `r` triplets.
    pub fn truncated(&self, r: usize) -> DenseMatrix {
        let r = r.min(self.singular_values.len());
        let rows = self.u.rows();
        let cols = self.vt.cols();
        let mut out = DMatrix::<f64>::zeros(rows, cols);
        for k in 0..r {
            let s = self.singular_values[k];
            if s == 0.0 {
                continue;
            }
            let uk = self.u.inner.column(k);
            let vk = self.vt.inner.row(k);
            for j in 0..cols {
                let sv = s * vk[j];
                for i in 0..rows {
                    out[(i, j)] += uk[i] * sv;
                }
            }
        }
        DenseMatrix { inner: out }
    }
}
