use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::matrix::{gen_matrix, MatrixKind};
use super::metrics::{genie_lmmse, nmse, nmse_db, sample_noise, sigma_for_snr};
use super::signal::gen_block_sparse_signal;
use crate::error::{Result, VspError};
use crate::model::{SolverKind, VspConfig};
use crate::vsp::run_vsp;
use crate::{ComplexMatrix, ComplexVector};

/// How the SNR's `sigma` maps onto per-component noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrConvention {
    /// `sigma` is the total noise norm: each component gets `sigma^2 / M`.
    Total,
    /// `sigma` is the per-component standard deviation.
    PerComponent,
}

impl SnrConvention {
    pub fn noise_variance(self, sigma: f64, m: usize) -> f64 {
        match self {
            SnrConvention::Total => sigma * sigma / m as f64,
            SnrConvention::PerComponent => sigma * sigma,
        }
    }
}

impl fmt::Display for SnrConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SnrConvention::Total => "total",
            SnrConvention::PerComponent => "per-component",
        })
    }
}

impl FromStr for SnrConvention {
    type Err = VspError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "total" => Ok(SnrConvention::Total),
            "per-component" => Ok(SnrConvention::PerComponent),
            other => Err(VspError::invalid(
                "snr_convention",
                format!("expected total or per-component, got {other:?}"),
            )),
        }
    }
}

/// One synthetic measurement problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: ComplexVector,
    pub support: Vec<usize>,
    pub a: ComplexMatrix,
    pub w: ComplexVector,
    pub y: ComplexVector,
    pub sigma: f64,
    /// Per-component noise variance handed to the solvers.
    pub noise_var: f64,
}

/// Draws signal, matrix and noise, in that order, from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn generate_instance<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    k: usize,
    l: usize,
    kind: MatrixKind,
    snr_db: f64,
    convention: SnrConvention,
    rng: &mut R,
) -> Result<Instance> {
    let signal = gen_block_sparse_signal(n, k, l, rng)?;
    let a = gen_matrix(kind, m, n, rng)?;
    let sigma = sigma_for_snr(&a, &signal.x, snr_db)?;
    let noise_var = convention.noise_variance(sigma, m);
    let w = sample_noise(m, noise_var, rng);
    let y = &a * &signal.x + &w;
    Ok(Instance {
        x: signal.x,
        support: signal.support,
        a,
        w,
        y,
        sigma,
        noise_var,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub m_grid: Vec<usize>,
    pub snr_grid: Vec<f64>,
    pub matrix_kind: MatrixKind,
    pub trials: usize,
    pub base_seed: u64,
    pub snr_convention: SnrConvention,
    /// Solver settings; `sigma2` is replaced per trial and `k_sparsity`
    /// defaults to `k`.
    pub config: VspConfig,
    /// Worker-pool width.
    pub jobs: usize,
    /// When false, `runtime_ms` is reported as 0 so outputs are byte-stable.
    pub record_timing: bool,
}

impl ExperimentSpec {
    pub fn new(id: impl Into<String>, n: usize, k: usize, l: usize, matrix_kind: MatrixKind) -> Self {
        ExperimentSpec {
            id: id.into(),
            n,
            k,
            l,
            m_grid: Vec::new(),
            snr_grid: Vec::new(),
            matrix_kind,
            trials: 1,
            base_seed: 0,
            snr_convention: SnrConvention::Total,
            config: VspConfig::default(),
            jobs: 1,
            record_timing: true,
        }
    }

    /// Every problem with this experiment description, one message each.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.id.is_empty() || self.id.contains([',', '"', '\n']) {
            errors.push("experiment id must be nonempty and free of commas, quotes and newlines".to_string());
        }
        if self.l == 0 || self.l > self.k {
            errors.push(format!("need 1 <= L <= K, got L={} K={}", self.l, self.k));
        }
        if self.k > self.n {
            errors.push(format!("need K <= N, got K={} N={}", self.k, self.n));
        }
        if self.m_grid.is_empty() {
            errors.push("M grid is empty".to_string());
        }
        for &m in &self.m_grid {
            if m == 0 || m > self.n {
                errors.push(format!("need 1 <= M <= N, got M={m} N={}", self.n));
            }
        }
        if self.snr_grid.is_empty() {
            errors.push("SNR grid is empty".to_string());
        }
        if self.snr_grid.iter().any(|s| !s.is_finite()) {
            errors.push("SNR values must be finite".to_string());
        }
        if self.trials == 0 {
            errors.push("trials must be >= 1".to_string());
        }
        if self.jobs == 0 {
            errors.push("jobs must be >= 1".to_string());
        }
        if matches!(self.matrix_kind, MatrixKind::ConcatExpGauss | MatrixKind::ConcatExp) && !self.n.is_multiple_of(2) {
            errors.push(format!("{} needs an even N, got {}", self.matrix_kind, self.n));
        }
        if self.n > 0 {
            if let Err(e) = self.trial_config(1.0).validate(self.n) {
                errors.push(e.to_string());
            }
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.validation_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(VspError::invalid("experiment", errors.join("; ")))
        }
    }

    /// Grid points in M-major order.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut points = Vec::with_capacity(self.m_grid.len() * self.snr_grid.len());
        for &m in &self.m_grid {
            for &snr_db in &self.snr_grid {
                points.push(GridPoint {
                    index: points.len(),
                    m,
                    snr_db,
                });
            }
        }
        points
    }

    pub fn algorithm_tag(&self) -> &'static str {
        match self.config.solver {
            SolverKind::Elbo => "vsp-elbo",
            SolverKind::Gd => "vsp-gd",
        }
    }

    fn trial_config(&self, noise_var: f64) -> VspConfig {
        VspConfig {
            sigma2: noise_var,
            k_sparsity: self.config.k_sparsity.or(Some(self.k)),
            ..self.config.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub m: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Ok { nmse: f64, runtime_ms: f64 },
    Failed(String),
}

impl TrialOutcome {
    pub fn nmse(&self) -> Option<f64> {
        match self {
            TrialOutcome::Ok { nmse, .. } => Some(*nmse),
            TrialOutcome::Failed(_) => None,
        }
    }

    pub fn nmse_db(&self) -> Option<f64> {
        self.nmse().map(nmse_db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub point: GridPoint,
    pub trial: usize,
    pub seed: u64,
    pub vsp: TrialOutcome,
    pub genie: TrialOutcome,
}

impl TrialResult {
    pub fn succeeded(&self) -> bool {
        self.vsp.nmse().is_some() && self.genie.nmse().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAggregate {
    pub point: GridPoint,
    /// `10 log10` of the mean linear NMSE; NaN when every trial failed.
    pub mean_nmse_db: f64,
    pub genie_mean_nmse_db: f64,
    pub trial_count: usize,
    pub failure_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<GridAggregate>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of trial `t` at grid point `g`.
pub fn trial_seed(base_seed: u64, g: usize, t: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ g as u64) ^ t as u64)
}

fn timed<T>(record: bool, f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let start = Instant::now();
    let out = f();
    let ms = if record { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    (out, ms)
}

fn outcome(result: Result<ComplexVector>, runtime_ms: f64, x: &ComplexVector) -> TrialOutcome {
    match result.and_then(|x_hat| nmse(&x_hat, x)) {
        Ok(v) if v.is_finite() => TrialOutcome::Ok { nmse: v, runtime_ms },
        Ok(v) => TrialOutcome::Failed(format!("non-finite nmse {v}")),
        Err(e) => TrialOutcome::Failed(e.to_string()),
    }
}

fn run_trial(spec: &ExperimentSpec, point: GridPoint, trial: usize) -> TrialResult {
    let seed = trial_seed(spec.base_seed, point.index, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = generate_instance(
        spec.n,
        point.m,
        spec.k,
        spec.l,
        spec.matrix_kind,
        point.snr_db,
        spec.snr_convention,
        &mut rng,
    );
    let (vsp, genie) = match instance {
        Ok(inst) => {
            let cfg = spec.trial_config(inst.noise_var);
            let (est, ms) = timed(spec.record_timing, || run_vsp(&inst.y, &inst.a, &cfg).map(|o| o.x_hat));
            let vsp = outcome(est, ms, &inst.x);
            let (est, ms) = timed(spec.record_timing, || {
                genie_lmmse(&inst.y, &inst.a, &inst.support, inst.noise_var)
            });
            (vsp, outcome(est, ms, &inst.x))
        }
        Err(e) => {
            let msg = format!("generation: {e}");
            (TrialOutcome::Failed(msg.clone()), TrialOutcome::Failed(msg))
        }
    };
    TrialResult {
        point,
        trial,
        seed,
        vsp,
        genie,
    }
}

fn mean_db(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        nmse_db(sum / count as f64)
    }
}

fn aggregate(points: &[GridPoint], trials: &[TrialResult]) -> Vec<GridAggregate> {
    points
        .iter()
        .map(|&point| {
            let ok: Vec<&TrialResult> = trials
                .iter()
                .filter(|r| r.point.index == point.index && r.succeeded())
                .collect();
            let total = trials.iter().filter(|r| r.point.index == point.index).count();
            GridAggregate {
                point,
                mean_nmse_db: mean_db(ok.iter().filter_map(|r| r.vsp.nmse())),
                genie_mean_nmse_db: mean_db(ok.iter().filter_map(|r| r.genie.nmse())),
                trial_count: ok.len(),
                failure_count: total - ok.len(),
            }
        })
        .collect()
}

/// Runs every (grid point, trial) pair on a pool of `spec.jobs` threads.
/// Results come back ordered by grid point then trial, whatever the pool
/// width.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let points = spec.grid_points();
    let tasks: Vec<(GridPoint, usize)> = points
        .iter()
        .flat_map(|&p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| VspError::invalid("jobs", e.to_string()))?;
    let trials: Vec<TrialResult> =
        pool.install(|| tasks.par_iter().map(|&(p, t)| run_trial(spec, p, t)).collect());
    let aggregates = aggregate(&points, &trials);
    Ok(ExperimentResult { trials, aggregates })
}
