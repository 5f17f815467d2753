use rand::Rng;

use super::signal::standard_complex_gaussian;
use crate::error::{Result, VspError};
use crate::linalg::{matmul, norm_sqr, HermitianFactor};
use crate::{ComplexMatrix, ComplexVector, C64};

/// Noise level `sigma = ||A x|| 10^(-snr_db / 20)`.
pub fn sigma_for_snr(a: &ComplexMatrix, x: &ComplexVector, snr_db: f64) -> Result<f64> {
    VspError::check_dim("sigma_for_snr signal length", a.ncols(), x.len())?;
    if !snr_db.is_finite() {
        return Err(VspError::invalid("snr_db", "must be finite"));
    }
    let power = norm_sqr(&(a * x)).sqrt();
    if power == 0.0 {
        return Err(VspError::Domain("A x = 0, SNR is undefined".into()));
    }
    Ok(power * 10f64.powf(-snr_db / 20.0))
}

/// `M` i.i.d. draws from CN(0, var).
pub fn sample_noise<R: Rng + ?Sized>(m: usize, var: f64, rng: &mut R) -> ComplexVector {
    let scale = var.sqrt();
    ComplexVector::from_fn(m, |_, _| standard_complex_gaussian(rng) * scale)
}

pub fn nmse(x_hat: &ComplexVector, x: &ComplexVector) -> Result<f64> {
    VspError::check_dim("nmse", x.len(), x_hat.len())?;
    let denom = norm_sqr(x);
    if denom == 0.0 {
        return Err(VspError::Domain("nmse needs a nonzero reference signal".into()));
    }
    Ok(norm_sqr(&(x_hat - x)) / denom)
}

pub fn nmse_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// LMMSE estimate with unit-variance priors on `columns` and zero elsewhere:
/// `x_S = A_S^H (A_S A_S^H + sigma2 I)^{-1} y`.
pub fn lmmse_on_columns(
    y: &ComplexVector,
    a: &ComplexMatrix,
    columns: &[usize],
    sigma2: f64,
) -> Result<ComplexVector> {
    VspError::check_dim("measurement length", a.nrows(), y.len())?;
    if columns.is_empty() {
        return Err(VspError::invalid("support", "must be nonempty"));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= a.ncols()) {
        return Err(VspError::invalid("support", format!("index {bad} out of range")));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(VspError::invalid("sigma2", format!("must be > 0, got {sigma2}")));
    }
    let a_s = a.select_columns(columns);
    let a_s_h = a_s.adjoint();
    // Both forms are the same estimator; factor whichever system is smaller.
    let x_s = if a_s.ncols() <= a_s.nrows() {
        let mut g = matmul(&a_s_h, &a_s);
        for i in 0..g.nrows() {
            g[(i, i)] += C64::new(sigma2, 0.0);
        }
        HermitianFactor::new(g, "A_S^H A_S + sigma2 I")?.solve_vec(&(&a_s_h * y))
    } else {
        let mut s = matmul(&a_s, &a_s_h);
        for i in 0..s.nrows() {
            s[(i, i)] += C64::new(sigma2, 0.0);
        }
        a_s_h * HermitianFactor::new(s, "A_S A_S^H + sigma2 I")?.solve_vec(y)
    };
    let mut x = ComplexVector::zeros(a.ncols());
    for (&c, v) in columns.iter().zip(x_s.iter()) {
        x[c] = *v;
    }
    Ok(x)
}

/// LMMSE with the true support known.
pub fn genie_lmmse(y: &ComplexVector, a: &ComplexMatrix, support: &[usize], sigma2: f64) -> Result<ComplexVector> {
    lmmse_on_columns(y, a, support, sigma2)
}
