//! Synthetic benchmark harness: block-sparse signal and matrix generators,
//! SNR calibration, NMSE, the support-aware LMMSE genie bound, and a
//! seeded Monte Carlo runner that fans trials out over a thread pool.

mod experiment;
mod matrix;
mod metrics;
pub mod presets;
mod report;
mod signal;

pub use experiment::{
    generate_instance, Instance,
    run_experiment, trial_seed, ExperimentResult, ExperimentSpec, GridAggregate, GridPoint, SnrConvention,
    TrialOutcome, TrialResult,
};
pub use matrix::{gen_matrix, MatrixKind};
pub use metrics::{genie_lmmse, lmmse_on_columns, nmse, nmse_db, sample_noise, sigma_for_snr};
pub use report::{aggregate_csv, gnuplot_script, trials_csv, TRIAL_CSV_HEADER};
pub use signal::{gen_block_sparse_signal, standard_complex_gaussian, BlockSparseSignal, MAX_REDRAWS};
