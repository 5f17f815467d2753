//! Outer loop of variance state propagation.
//!
//! Each outer round runs an inner solver (gradient or EM) on the variance
//! means, maps the result to activity probabilities by moment matching
//! against `kappa`, refines them through the support-state MRF and maps
//! them back to variance means for the next inner solve. The final estimate
//! is the posterior mean at the last inner-solver output.

use crate::elbo::elbo_solve;
use crate::error::{Result, VspError};
use crate::gd::gd_solve_traced;
use crate::linalg::{frobenius_sqr, norm_sqr};
use crate::model::{BeliefState, InitStrategy, SolverKind, VspConfig};
use crate::mrf::{mrf_output_damped, MrfTopology};
use crate::posterior::{apply_floor, LinearSystem};
use crate::{ComplexMatrix, ComplexVector};

/// Mean of the `k_prime` largest entries of `mu`.
pub fn kappa(mu: &[f64], k_prime: usize) -> Result<f64> {
    if k_prime == 0 || k_prime > mu.len() {
        return Err(VspError::invalid(
            "k_prime",
            format!("must lie in [1, {}], got {k_prime}", mu.len()),
        ));
    }
    let mut order: Vec<usize> = (0..mu.len()).collect();
    // Descending by value, ties by lower index.
    order.sort_by(|&i, &j| mu[j].total_cmp(&mu[i]).then(i.cmp(&j)));
    Ok(order[..k_prime].iter().map(|&i| mu[i]).sum::<f64>() / k_prime as f64)
}

/// `pi_i = min(mu_i / kappa, 1)`.
pub fn pi_from_mu(mu: &[f64], kappa_val: f64) -> Result<Vec<f64>> {
    if !(kappa_val > 0.0 && kappa_val.is_finite()) {
        return Err(VspError::Domain(format!("kappa must be positive and finite, got {kappa_val}")));
    }
    Ok(mu.iter().map(|m| (m / kappa_val).min(1.0)).collect())
}

/// `mu_i = kappa * max(pi_i, pi_floor)`.
pub fn mu_from_pi(pi: &[f64], kappa_val: f64, pi_floor: f64) -> Vec<f64> {
    pi.iter().map(|p| kappa_val * p.max(pi_floor)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundDiagnostics {
    pub round: usize,
    /// `chi` at the (floored) inner-solver output.
    pub chi: f64,
    /// `None` on the last round, or when the round was skipped because
    /// `kappa` came out nonpositive.
    pub kappa: Option<f64>,
    pub pi_f_to_s: Option<Vec<f64>>,
    pub pi_s_to_f: Option<Vec<f64>>,
    pub mrf_sweeps: usize,
    pub mrf_degenerate: usize,
    /// GD rounds in which no step passed the line search.
    pub gd_rejected_rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VspOutput {
    pub x_hat: ComplexVector,
    pub beliefs: BeliefState,
    pub rounds: Vec<RoundDiagnostics>,
}

fn initial_means(a: &ComplexMatrix, y: &ComplexVector, config: &VspConfig) -> Vec<f64> {
    let n = a.ncols();
    let value = match config.init {
        InitStrategy::Constant(c) => c,
        InitStrategy::PowerEstimate => {
            let fro = frobenius_sqr(a);
            if fro > 0.0 {
                norm_sqr(y) / fro * n as f64 / config.sparsity(n) as f64
            } else {
                0.0
            }
        }
    };
    vec![value; n]
}

fn finite_nonnegative(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x >= 0.0)
}

pub fn run_vsp(y: &ComplexVector, a: &ComplexMatrix, config: &VspConfig) -> Result<VspOutput> {
    let n = a.ncols();
    VspError::check_dim("measurement length", a.nrows(), y.len())?;
    config.validate(n)?;
    if a.iter().chain(y.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(VspError::Domain("A and y must have finite entries".into()));
    }
    let system = LinearSystem::new(a, y, config.sigma2)?;
    let topo = MrfTopology::new(config.topology, n)?;
    let k_prime = config.k_prime(n);

    let mut beliefs = BeliefState::new(initial_means(a, y, config));
    let mut rounds = Vec::with_capacity(config.t_out);

    for t in 0..config.t_out {
        let mut gd_rejected_rounds = 0;
        beliefs.mu_g_to_v = match config.solver {
            SolverKind::Elbo => elbo_solve(a, y, &beliefs.mu_v_to_g, config.t_in, config.sigma2)?,
            SolverKind::Gd => {
                let out = gd_solve_traced(
                    a,
                    y,
                    &beliefs.mu_v_to_g,
                    config.t_in,
                    config.sigma2,
                    config.line_search,
                    config.gd_rel_tol,
                )?;
                gd_rejected_rounds = out.rounds.iter().filter(|r| r.step.is_none()).count();
                out.mu
            }
        };
        if !finite_nonnegative(&beliefs.mu_g_to_v) {
            return Err(VspError::NonFinite {
                stage: "inner solver",
                round: t,
                snapshot: Box::new(beliefs),
            });
        }
        let chi = system.chi(&apply_floor(&beliefs.mu_g_to_v))?;

        let mut diag = RoundDiagnostics {
            round: t,
            chi,
            kappa: None,
            pi_f_to_s: None,
            pi_s_to_f: None,
            mrf_sweeps: 0,
            mrf_degenerate: 0,
            gd_rejected_rounds,
        };

        if t + 1 < config.t_out {
            let kappa_val = kappa(&beliefs.mu_g_to_v, k_prime)?;
            match pi_from_mu(&beliefs.mu_g_to_v, kappa_val) {
                Ok(pi_f_to_s) => {
                    let mrf = mrf_output_damped(
                        &pi_f_to_s,
                        &topo,
                        config.mrf.alpha,
                        config.mrf.beta,
                        config.mrf_sweeps,
                        config.mrf_damping,
                    )?;
                    beliefs.mu_v_to_g = mu_from_pi(&mrf.pi, kappa_val, config.pi_floor);
                    beliefs.pi_f_to_s = pi_f_to_s;
                    beliefs.pi_s_to_f = mrf.pi;
                    diag.kappa = Some(kappa_val);
                    diag.pi_f_to_s = Some(beliefs.pi_f_to_s.clone());
                    diag.pi_s_to_f = Some(beliefs.pi_s_to_f.clone());
                    diag.mrf_sweeps = mrf.sweeps;
                    diag.mrf_degenerate = mrf.degenerate;
                }
                // Degenerate kappa: skip the MRF and restart from the solver output.
                Err(_) => beliefs.mu_v_to_g = beliefs.mu_g_to_v.clone(),
            }
            if !beliefs.is_valid() {
                return Err(VspError::NonFinite {
                    stage: "moment matching",
                    round: t,
                    snapshot: Box::new(beliefs),
                });
            }
        }
        rounds.push(diag);
    }

    let x_hat = system.posterior(&beliefs.mu_g_to_v, false)?.m;
    if x_hat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(VspError::NonFinite {
            stage: "posterior mean",
            round: config.t_out,
            snapshot: Box::new(beliefs),
        });
    }
    Ok(VspOutput { x_hat, beliefs, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;
    use crate::C64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(&[4.0, 1.0, 3.0, 2.0], 2).unwrap(), 3.5);
        assert_eq!(kappa(&[2.5; 6], 4).unwrap(), 2.5);
        assert_eq!(kappa(&[4.0, 1.0, 3.0, 2.0], 4).unwrap(), 2.5);
        assert!(kappa(&[1.0, 2.0], 0).is_err());
        assert!(kappa(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn kappa_matches_sorting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..30);
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
            let k = rng.random_range(1..=n);
            let mut sorted = mu.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let expected = sorted[..k].iter().sum::<f64>() / k as f64;
            assert!((kappa(&mu, k).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_from_mu_examples() {
        assert_eq!(pi_from_mu(&[3.0], 3.0).unwrap(), vec![1.0]);
        assert_eq!(pi_from_mu(&[0.0], 3.0).unwrap(), vec![0.0]);
        assert_eq!(pi_from_mu(&[0.2, 2.0, 0.5], 1.0).unwrap(), vec![0.2, 1.0, 0.5]);
        assert!(pi_from_mu(&[1.0], 0.0).is_err());
        assert!(pi_from_mu(&[1.0], -1.0).is_err());
    }

    #[test]
    fn mu_from_pi_examples() {
        assert_eq!(mu_from_pi(&[1.0], 2.0, 1e-4), vec![2.0]);
        assert_eq!(mu_from_pi(&[0.0], 2.0, 1e-4), vec![2e-4]);
        assert_eq!(mu_from_pi(&[0.5; 3], 3.0, 1e-4), vec![1.5; 3]);
    }

    proptest! {
        #[test]
        fn moment_matching_round_trip(mu in prop::collection::vec(0.0f64..10.0, 1..20), kappa_val in 0.1f64..8.0) {
            let pi = pi_from_mu(&mu, kappa_val).unwrap();
            prop_assert!(pi.iter().all(|p| (0.0..=1.0).contains(p)));
            let back = mu_from_pi(&pi, kappa_val, 0.0);
            for (b, m) in back.iter().zip(&mu) {
                prop_assert!(*b <= m * (1.0 + 1e-15));
                if *m <= kappa_val {
                    prop_assert!((b - m).abs() <= 1e-12 * m.max(1.0));
                } else {
                    prop_assert_eq!(*b, kappa_val);
                }
            }
        }
    }

    fn random_problem(rng: &mut impl Rng, m: usize, n: usize) -> (ComplexMatrix, ComplexVector) {
        let a = ComplexMatrix::from_fn(m, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let mut x = ComplexVector::zeros(n);
        for i in 2..6.min(n) {
            x[i] = C64::new(1.0 + i as f64, -1.0);
        }
        let y = &a * x;
        (a, y)
    }

    #[test]
    fn zero_measurements_give_zero_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, _) = random_problem(&mut rng, 6, 12);
        let y = ComplexVector::zeros(6);
        for solver in [SolverKind::Elbo, SolverKind::Gd] {
            let cfg = VspConfig { solver, k_sparsity: Some(3), t_in: 5, ..VspConfig::default() };
            let out = run_vsp(&y, &a, &cfg).unwrap();
            assert!(out.x_hat.iter().all(|z| *z == C64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn near_identity_system_recovers_signal() {
        let a = ComplexMatrix::identity(2, 2);
        let y = ComplexVector::from_vec(vec![C64::new(5.0, 0.0), C64::new(0.0, 0.0)]);
        let cfg = VspConfig { sigma2: 1e-4, k_sparsity: Some(1), vartheta: 1.0, ..VspConfig::default() };
        let out = run_vsp(&y, &a, &cfg).unwrap();
        assert!((out.x_hat[0] - C64::new(5.0, 0.0)).norm() < 1e-2);
        assert!(out.x_hat[1].norm() < 1e-2);
    }

    #[test]
    fn beliefs_stay_valid_and_diagnostics_recorded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, y) = random_problem(&mut rng, 10, 20);
        let cfg = VspConfig { t_out: 4, k_sparsity: Some(4), sigma2: 1e-3, ..VspConfig::default() };
        let out = run_vsp(&y, &a, &cfg).unwrap();
        assert!(out.beliefs.is_valid());
        assert_eq!(out.rounds.len(), 4);
        for r in &out.rounds[..3] {
            let k = r.kappa.unwrap();
            assert!(k > 0.0);
            assert!(r.pi_s_to_f.as_ref().unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
            assert!(r.chi.is_finite());
        }
        assert!(out.rounds[3].kappa.is_none());
    }

    #[test]
    fn deterministic_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (a, y) = random_problem(&mut rng, 8, 16);
        let cfg = VspConfig { k_sparsity: Some(4), ..VspConfig::default() };
        let first = run_vsp(&y, &a, &cfg).unwrap();
        let second = run_vsp(&y, &a, &cfg).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn elbo_path_is_scale_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, y) = random_problem(&mut rng, 8, 16);
        let cfg = VspConfig { k_sparsity: Some(4), sigma2: 0.01, t_out: 3, ..VspConfig::default() };
        let base = run_vsp(&y, &a, &cfg).unwrap().x_hat;
        let c = 7.5;
        let scaled_cfg = VspConfig { sigma2: cfg.sigma2 * c * c, ..cfg.clone() };
        let scaled = run_vsp(&(y * C64::new(c, 0.0)), &a, &scaled_cfg).unwrap().x_hat;
        let err = (scaled - base.clone() * C64::new(c, 0.0)).norm() / (c * base.norm());
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn grid_topology_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (a, y) = random_problem(&mut rng, 8, 16);
        let cfg = VspConfig { topology: Topology::Grid { rows: 4, cols: 4 }, k_sparsity: Some(4), ..VspConfig::default() };
        assert!(run_vsp(&y, &a, &cfg).is_ok());
        let bad = VspConfig { topology: Topology::Grid { rows: 3, cols: 4 }, ..cfg };
        assert!(run_vsp(&y, &a, &bad).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = ComplexMatrix::zeros(3, 5);
        let y = ComplexVector::zeros(4);
        assert!(matches!(run_vsp(&y, &a, &VspConfig::default()), Err(VspError::DimensionMismatch { .. })));
    }
}
