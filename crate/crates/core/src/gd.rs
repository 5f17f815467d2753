//! Gradient-descent inner solver: every variance mean moves along
//! `-grad chi` with one common backtracked step size per round.

use crate::error::{Result, VspError};
use crate::posterior::{apply_floor, variance_floor, LinearSystem};
use crate::{ComplexMatrix, ComplexVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub eps0: f64,
    pub shrink: f64,
    pub max_halvings: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            eps0: 1.0,
            shrink: 0.5,
            max_halvings: 40,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0.is_finite() && self.eps0 > 0.0) {
            return Err(VspError::invalid("eps0", "initial step must be > 0"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(VspError::invalid("shrink", "must lie in (0, 1)"));
        }
        if self.max_halvings == 0 {
            return Err(VspError::invalid("max_halvings", "must be >= 1"));
        }
        Ok(())
    }
}

/// One gradient round.
#[derive(Debug, Clone, PartialEq)]
pub struct GdRound {
    /// Accepted step, `None` when no trial step passed the nonincrease test.
    pub step: Option<f64>,
    pub chi_before: f64,
    pub chi_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub mu: Vec<f64>,
    pub rounds: Vec<GdRound>,
}

impl GdOutcome {
    /// `chi` at the input followed by `chi` after every round.
    pub fn chi_trace(&self) -> Vec<f64> {
        let mut trace = Vec::with_capacity(self.rounds.len() + 1);
        if let Some(first) = self.rounds.first() {
            trace.push(first.chi_before);
        }
        trace.extend(self.rounds.iter().map(|r| r.chi_after));
        trace
    }
}

pub fn gd_solve(
    a: &ComplexMatrix,
    y: &ComplexVector,
    mu_in: &[f64],
    t_in: usize,
    sigma2: f64,
    ls: LineSearchParams,
) -> Result<Vec<f64>> {
    gd_solve_traced(a, y, mu_in, t_in, sigma2, ls, None).map(|o| o.mu)
}

/// Runs `t_in` rounds of `mu <- max(mu - eps * grad chi, floor)`.
///
/// `eps` is the first of `eps0 * shrink^k`, `k = 0..=max_halvings`, whose
/// clamped candidate satisfies `chi(new) <= chi(old)`. A round without such
/// a step leaves `mu` unchanged. `rel_tol` enables an early exit once the
/// relative change of `chi` in a round drops below it.
pub fn gd_solve_traced(
    a: &ComplexMatrix,
    y: &ComplexVector,
    mu_in: &[f64],
    t_in: usize,
    sigma2: f64,
    ls: LineSearchParams,
    rel_tol: Option<f64>,
) -> Result<GdOutcome> {
    if t_in == 0 {
        return Err(VspError::invalid("t_in", "must be >= 1"));
    }
    ls.validate()?;
    let system = LinearSystem::new(a, y, sigma2)?;
    VspError::check_dim("gd_solve mu_in", system.n(), mu_in.len())?;
    if mu_in.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(VspError::Domain("gd_solve requires finite mu_in >= 0".into()));
    }

    let mut mu = apply_floor(mu_in);
    let mut chi_old = system.chi(&mu)?;
    let mut rounds = Vec::with_capacity(t_in);

    for _ in 0..t_in {
        let grad = system.chi_gradient(&mu)?;
        let floor = variance_floor(&mu);
        let mut accepted = None;
        let mut eps = ls.eps0;
        for _ in 0..=ls.max_halvings {
            let candidate: Vec<f64> = mu
                .iter()
                .zip(&grad)
                .map(|(m, g)| (m - eps * g).max(floor))
                .collect();
            if let Ok(chi_new) = system.chi(&candidate) {
                if chi_new <= chi_old {
                    accepted = Some((eps, candidate, chi_new));
                    break;
                }
            }
            eps *= ls.shrink;
        }

        match accepted {
            Some((eps, candidate, chi_new)) => {
                rounds.push(GdRound {
                    step: Some(eps),
                    chi_before: chi_old,
                    chi_after: chi_new,
                });
                let converged = rel_tol
                    .map(|tol| (chi_old - chi_new).abs() <= tol * chi_old.abs().max(1.0))
                    .unwrap_or(false);
                mu = candidate;
                chi_old = chi_new;
                if converged {
                    break;
                }
            }
            None => rounds.push(GdRound {
                step: None,
                chi_before: chi_old,
                chi_after: chi_old,
            }),
        }
    }
    Ok(GdOutcome { mu, rounds })
}
