//! EM / evidence-lower-bound inner solver. Each round recomputes the
//! posterior at the current variance means and replaces every mean by the
//! posterior second moment `|m_i|^2 + phi_ii`.

use crate::error::{Result, VspError};
use crate::posterior::LinearSystem;
use crate::{ComplexMatrix, ComplexVector};

pub fn elbo_solve(
    a: &ComplexMatrix,
    y: &ComplexVector,
    mu_in: &[f64],
    t_in: usize,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let system = LinearSystem::new(a, y, sigma2)?;
    let mut mu = check_input(&system, mu_in, t_in)?;
    for _ in 0..t_in {
        mu = elbo_step(&system, &mu)?;
    }
    Ok(mu)
}

/// Like [`elbo_solve`] but also returns the iterate after every round.
pub fn elbo_solve_traced(
    a: &ComplexMatrix,
    y: &ComplexVector,
    mu_in: &[f64],
    t_in: usize,
    sigma2: f64,
) -> Result<Vec<Vec<f64>>> {
    let system = LinearSystem::new(a, y, sigma2)?;
    let mut mu = check_input(&system, mu_in, t_in)?;
    let mut trace = vec![mu.clone()];
    for _ in 0..t_in {
        mu = elbo_step(&system, &mu)?;
        trace.push(mu.clone());
    }
    Ok(trace)
}

/// Iterates until the largest absolute change drops below `tol` or
/// `max_rounds` is reached. Returns the iterate and the rounds used.
pub fn elbo_fixed_point(
    a: &ComplexMatrix,
    y: &ComplexVector,
    mu_in: &[f64],
    tol: f64,
    max_rounds: usize,
    sigma2: f64,
) -> Result<(Vec<f64>, usize)> {
    let system = LinearSystem::new(a, y, sigma2)?;
    let mut mu = check_input(&system, mu_in, max_rounds)?;
    for round in 1..=max_rounds {
        let next = elbo_step(&system, &mu)?;
        let change = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mu = next;
        if change < tol {
            return Ok((mu, round));
        }
    }
    Ok((mu, max_rounds))
}

pub(crate) fn elbo_step(system: &LinearSystem<'_>, mu: &[f64]) -> Result<Vec<f64>> {
    let moments = system.posterior(mu, false)?;
    Ok(moments
        .m
        .iter()
        .zip(&moments.phi_diag)
        .map(|(m, phi)| m.norm_sqr() + phi)
        .collect())
}

fn check_input(system: &LinearSystem<'_>, mu_in: &[f64], t_in: usize) -> Result<Vec<f64>> {
    if t_in == 0 {
        return Err(VspError::invalid("t_in", "must be >= 1"));
    }
    VspError::check_dim("elbo_solve mu_in", system.n(), mu_in.len())?;
    if mu_in.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(VspError::Domain("elbo_solve requires finite mu_in >= 0".into()));
    }
    Ok(mu_in.to_vec())
}
