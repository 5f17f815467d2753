//! The linear module: Gaussian posterior of `x` given per-coordinate prior
//! variances, the evidence surrogate `chi` and its gradient.
//!
//! The posterior is computed in the dual (Woodbury) form
//!
//! ```text
//! S   = A D A^H + sigma2 I
//! Phi = D - D A^H S^{-1} A D
//! m   = D A^H S^{-1} y
//! ```
//!
//! which stays well defined when some variances are exactly zero. Only the
//! M x M system `S` is factorized.

use std::sync::OnceLock;

use crate::error::{Result, VspError};
use crate::linalg::{matmul, HermitianFactor};
use crate::{ComplexMatrix, ComplexVector, C64};

/// Relative size of the positive floor applied before evaluating `chi`.
pub const FLOOR_SCALE: f64 = 1e-12;

/// `1e-12 * max(max_i v_i, 1)`.
pub fn variance_floor(v: &[f64]) -> f64 {
    FLOOR_SCALE * v.iter().copied().fold(1.0, f64::max)
}

/// Copy of `v` with every entry raised to at least [`variance_floor`].
pub fn apply_floor(v: &[f64]) -> Vec<f64> {
    let floor = variance_floor(v);
    v.iter().map(|x| x.max(floor)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub m: ComplexVector,
    pub phi_diag: Vec<f64>,
    /// Full covariance, only materialized on request.
    pub phi: Option<ComplexMatrix>,
}

/// A measurement system `y = A x + w` with known noise variance, with the
/// v-independent products cached.
pub struct LinearSystem<'a> {
    a: &'a ComplexMatrix,
    y: &'a ComplexVector,
    sigma2: f64,
    a_h: ComplexMatrix,
    a_h_y: ComplexVector,
    gram: OnceLock<ComplexMatrix>,
}

impl<'a> LinearSystem<'a> {
    pub fn new(a: &'a ComplexMatrix, y: &'a ComplexVector, sigma2: f64) -> Result<Self> {
        VspError::check_dim("measurement length", a.nrows(), y.len())?;
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(VspError::invalid("sigma2", format!("must be > 0, got {sigma2}")));
        }
        let a_h = a.adjoint();
        let a_h_y = &a_h * y;
        Ok(LinearSystem {
            a,
            y,
            sigma2,
            a_h,
            a_h_y,
            gram: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    fn check_variances(&self, v: &[f64], strictly_positive: bool) -> Result<()> {
        VspError::check_dim("variance vector", self.n(), v.len())?;
        for (i, &vi) in v.iter().enumerate() {
            if !vi.is_finite() || vi < 0.0 {
                return Err(VspError::Domain(format!("variance v[{i}] = {vi} is not a finite nonnegative value")));
            }
            if strictly_positive && vi <= 0.0 {
                return Err(VspError::Domain(format!("chi requires v > 0, but v[{i}] = {vi}")));
            }
        }
        Ok(())
    }

    /// Factorizes `S = A D A^H + sigma2 I` and returns it with `S^{-1} A`.
    fn dual_system(&self, v: &[f64]) -> Result<(HermitianFactor, ComplexMatrix)> {
        let mut ad = self.a.clone();
        for (j, mut col) in ad.column_iter_mut().enumerate() {
            col *= C64::new(v[j], 0.0);
        }
        let mut s = matmul(&ad, &self.a_h);
        for i in 0..s.nrows() {
            s[(i, i)] += C64::new(self.sigma2, 0.0);
        }
        let factor = HermitianFactor::new(s, "A D A^H + sigma2 I")?;
        let s_inv_a = matmul(&factor.inverse(), self.a);
        Ok((factor, s_inv_a))
    }

    /// Posterior mean and diagonal covariance; `full` also materializes Phi.
    pub fn posterior(&self, v: &[f64], full: bool) -> Result<PosteriorMoments> {
        self.check_variances(v, false)?;
        let (factor, s_inv_a) = self.dual_system(v)?;
        let z = factor.solve_vec(self.y);
        let a_h_z = &self.a_h * &z;
        let m = ComplexVector::from_fn(self.n(), |i, _| a_h_z[i] * v[i]);

        // a_i^H S^{-1} a_i for every column.
        let quad: Vec<f64> = (0..self.n())
            .map(|j| {
                self.a
                    .column(j)
                    .iter()
                    .zip(s_inv_a.column(j).iter())
                    .map(|(a, t)| (a.conj() * t).re)
                    .sum::<f64>()
            })
            .collect();
        let phi_diag: Vec<f64> = v
            .iter()
            .zip(&quad)
            .map(|(&vi, &q)| (vi - vi * vi * q).clamp(0.0, vi))
            .collect();

        let phi = if full {
            let g = matmul(&self.a_h, &s_inv_a);
            let n = self.n();
            let mut phi = ComplexMatrix::zeros(n, n);
            for j in 0..n {
                for i in 0..n {
                    if i == j {
                        phi[(i, i)] = C64::new(phi_diag[i], 0.0);
                    } else {
                        let gij = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
                        phi[(i, j)] = -gij * (v[i] * v[j]);
                    }
                }
            }
            Some(phi)
        } else {
            None
        };
        Ok(PosteriorMoments { m, phi_diag, phi })
    }

    /// `chi(v) = -m^H Phi^{-1} m - ln|Phi| + sum ln v_i`.
    ///
    /// The data term uses `m^H Phi^{-1} m = sigma^-2 y^H A m`. The log
    /// determinant is taken from the primal side, `ln|Phi| - sum ln v_i =
    /// -ln det(I + sigma^-2 D^{1/2} A^H A D^{1/2})`, which avoids `D^{-1}`.
    pub fn chi(&self, v: &[f64]) -> Result<f64> {
        self.check_variances(v, true)?;
        let moments = self.posterior(v, false)?;
        let data = self.a_h_y.dotc(&moments.m).re / self.sigma2;

        let gram = self.gram.get_or_init(|| matmul(&self.a_h, self.a));
        let n = self.n();
        let sqrt_v: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
        let kernel = ComplexMatrix::from_fn(n, n, |i, j| {
            let base = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            base + gram[(i, j)] * (sqrt_v[i] * sqrt_v[j] / self.sigma2)
        });
        let log_det = HermitianFactor::new(kernel, "I + sigma^-2 D^1/2 A^H A D^1/2")?.log_det();
        Ok(-data + log_det)
    }

    /// `d chi / d v_i = -|y^H A u_i|^2 / (sigma^4 v_i^2) - phi_ii / v_i^2 + 1 / v_i`
    /// with `u_i` the i-th column of Phi. Since Phi is Hermitian,
    /// `y^H A u_i / sigma^2` is the conjugate of `m_i`; using the mean directly
    /// avoids amplifying roundoff in Phi by `1 / sigma^2`.
    pub fn chi_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_variances(v, true)?;
        let moments = self.posterior(v, false)?;
        Ok((0..self.n())
            .map(|i| {
                let vi = v[i];
                // Grouped into one numerator to avoid cancelling O(1/v_i) terms.
                (vi - moments.phi_diag[i] - moments.m[i].norm_sqr()) / (vi * vi)
            })
            .collect())
    }
}

pub fn posterior_moments(
    a: &ComplexMatrix,
    y: &ComplexVector,
    v: &[f64],
    sigma2: f64,
) -> Result<PosteriorMoments> {
    LinearSystem::new(a, y, sigma2)?.posterior(v, false)
}

pub fn posterior_moments_full(
    a: &ComplexMatrix,
    y: &ComplexVector,
    v: &[f64],
    sigma2: f64,
) -> Result<PosteriorMoments> {
    LinearSystem::new(a, y, sigma2)?.posterior(v, true)
}

pub fn chi(a: &ComplexMatrix, y: &ComplexVector, v: &[f64], sigma2: f64) -> Result<f64> {
    LinearSystem::new(a, y, sigma2)?.chi(v)
}

pub fn chi_gradient(a: &ComplexMatrix, y: &ComplexVector, v: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    LinearSystem::new(a, y, sigma2)?.chi_gradient(v)
}
