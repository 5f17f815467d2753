//! The six published sweep setups. All use the EM inner solver with
//! `T_out = 2`, `T_in = 30`, `K' = 2K` and 500 trials per point.

use super::experiment::ExperimentSpec;
use super::matrix::MatrixKind;
use crate::model::{SolverKind, VspConfig};

pub const NAMES: [&str; 6] = ["fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b"];

pub const DEFAULT_TRIALS: usize = 500;

pub fn snr_sweep() -> Vec<f64> {
    vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
}

fn base(id: &str, n: usize, k: usize, l: usize, kind: MatrixKind) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(id, n, k, l, kind);
    spec.trials = DEFAULT_TRIALS;
    spec.config = VspConfig {
        solver: SolverKind::Elbo,
        t_out: 2,
        t_in: 30,
        vartheta: 2.0,
        ..VspConfig::default()
    };
    spec
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    let mut spec = match name {
        "fig5a" | "fig5b" => base(name, 200, 30, 1, MatrixKind::Scg),
        "fig6a" | "fig6b" => base(name, 100, 20, 2, MatrixKind::CroppedHermitian),
        "fig7a" | "fig7b" => base(name, 300, 50, 3, MatrixKind::ConcatExpGauss),
        _ => return None,
    };
    match name {
        "fig5a" => (spec.m_grid, spec.snr_grid) = (vec![75], snr_sweep()),
        "fig5b" => (spec.m_grid, spec.snr_grid) = ((60..=140).step_by(10).collect(), vec![20.0]),
        "fig6a" => (spec.m_grid, spec.snr_grid) = (vec![60], snr_sweep()),
        "fig6b" => (spec.m_grid, spec.snr_grid) = ((40..=80).step_by(5).collect(), vec![20.0]),
        "fig7a" => (spec.m_grid, spec.snr_grid) = (vec![120], snr_sweep()),
        _ => (spec.m_grid, spec.snr_grid) = ((100..=200).step_by(20).collect(), vec![20.0]),
    }
    Some(spec)
}
