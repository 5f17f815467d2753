//! Dense complex helpers: blocked matrix products, Hermitian factorizations
//! and the circularly-symmetric complex Gaussian log-density.

use std::f64::consts::PI;

use matrixmultiply::{zgemm, CGemmOption};

use crate::error::{Result, VspError};
use crate::{ComplexMatrix, ComplexVector, C64};

/// `a * b` through the packed complex GEMM kernel.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul inner dimensions");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = ComplexMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: nalgebra stores dense matrices column-major and contiguous;
    // `Complex<f64>` is `repr(C)` with the same layout as `[f64; 2]`.
    unsafe {
        zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// Conjugate transpose.
pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &ComplexVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Squared Frobenius norm.
pub fn frobenius_sqr(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Lower Cholesky factor `L L^H` of a Hermitian positive-definite matrix,
/// with its log-determinant. Only the lower triangle of the input is read.
pub struct HermitianFactor {
    l: ComplexMatrix,
    log_det: f64,
}

impl HermitianFactor {
    pub fn new(mut mat: ComplexMatrix, context: &'static str) -> Result<Self> {
        if !mat.is_square() {
            return Err(VspError::check_dim(context, mat.nrows(), mat.ncols()).unwrap_err());
        }
        let n = mat.nrows();
        let mut log_det = 0.0;
        for j in 0..n {
            let mut d = mat[(j, j)].re;
            for k in 0..j {
                d -= mat[(j, k)].norm_sqr();
            }
            if !d.is_finite() || d <= 0.0 {
                return Err(VspError::NotPositiveDefinite(context));
            }
            let djj = d.sqrt();
            log_det += 2.0 * djj.ln();
            mat[(j, j)] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut acc = mat[(i, j)];
                for k in 0..j {
                    acc -= mat[(i, k)] * mat[(j, k)].conj();
                }
                mat[(i, j)] = acc / djj;
            }
            for i in 0..j {
                mat[(i, j)] = C64::new(0.0, 0.0);
            }
        }
        Ok(HermitianFactor { l: mat, log_det })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `L z = b`.
    fn forward(&self, b: &ComplexVector) -> ComplexVector {
        let n = self.l.nrows();
        let mut z = b.clone();
        for i in 0..n {
            let mut acc = z[i];
            for k in 0..i {
                acc -= self.l[(i, k)] * z[k];
            }
            z[i] = acc / self.l[(i, i)].re;
        }
        z
    }

    /// Solves `L^H x = z`.
    fn backward(&self, z: &ComplexVector) -> ComplexVector {
        let n = self.l.nrows();
        let mut x = z.clone();
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in i + 1..n {
                acc -= self.l[(k, i)].conj() * x[k];
            }
            x[i] = acc / self.l[(i, i)].re;
        }
        x
    }

    pub fn solve_vec(&self, b: &ComplexVector) -> ComplexVector {
        self.backward(&self.forward(b))
    }

    /// `S^{-1} = L^{-H} L^{-1}`.
    pub fn inverse(&self) -> ComplexMatrix {
        let n = self.l.nrows();
        let mut l_inv = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            l_inv[(j, j)] = C64::new(1.0 / self.l[(j, j)].re, 0.0);
            for i in j + 1..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in j..i {
                    acc -= self.l[(i, k)] * l_inv[(k, j)];
                }
                l_inv[(i, j)] = acc / self.l[(i, i)].re;
            }
        }
        matmul(&l_inv.adjoint(), &l_inv)
    }

    /// `b^H S^{-1} b`, evaluated as `||L^{-1} b||^2`.
    pub fn quad_form(&self, b: &ComplexVector) -> f64 {
        norm_sqr(&self.forward(b))
    }
}

/// `ln CN(y; 0, cov) = -y^H cov^{-1} y - ln det(pi cov)`.
pub fn cscg_loglik(y: &ComplexVector, cov: &ComplexMatrix) -> Result<f64> {
    VspError::check_dim("cscg_loglik", cov.nrows(), y.len())?;
    let factor = HermitianFactor::new(cov.clone(), "cscg covariance")?;
    let m = y.len() as f64;
    Ok(-factor.quad_form(y) - m * PI.ln() - factor.log_det())
}
