use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vsp_core::bench::{
    aggregate_csv, generate_instance, gnuplot_script, nmse, nmse_db, run_experiment, trials_csv, MatrixKind,
};
use vsp_core::vsp::{run_vsp, VspOutput};
use vsp_core::{ComplexMatrix, ComplexVector};

use crate::io::{read_matrix, read_vector, write_atomic, write_matrix, write_vector};
use crate::settings::{Settings, SolverFlags};
use crate::spec_file::{parse_spec, preset_spec};
use crate::UsageError;

/// Environment variable capping the bench worker pool.
pub const THREADS_ENV: &str = "VSP_THREADS";

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Measurement matrix A (.vspm, .csv).
    #[arg(long, value_name = "PATH")]
    pub matrix: PathBuf,
    /// Measurements y (.vspm, .csv).
    #[arg(long, value_name = "PATH")]
    pub measurements: PathBuf,
    /// Ground truth x; prints the NMSE when given (.vspm, .csv, .pgm).
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    /// Output directory for x_hat.vspm and diagnostics.json.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML experiment description.
    #[arg(long, value_name = "PATH", conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// One of the built-in sweeps: fig5a, fig5b, fig6a, fig6b, fig7a, fig7b.
    #[arg(long)]
    pub preset: Option<String>,
    /// Directory receiving the CSV files and the plot script.
    #[arg(long, value_name = "DIR", default_value = "results")]
    pub out_dir: PathBuf,
    /// Worker-pool width; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the matrix family.
    #[arg(long)]
    pub matrix_kind: Option<String>,
    /// Reports runtime_ms as 0 so output files are reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Signal length N.
    #[arg(long)]
    pub n: usize,
    /// Number of measurements M.
    #[arg(long)]
    pub m: usize,
    /// Number of nonzeros K in the generated signal. The solver's `--k`
    /// defaults to it.
    #[arg(long = "nonzeros", value_name = "K")]
    pub nonzeros: usize,
    /// Number of blocks.
    #[arg(long)]
    pub l: usize,
    /// Matrix family: scg, cropped_hermitian, concat_exp_gauss, concat_exp or real_normal.
    #[arg(long, default_value = "scg")]
    pub kind: String,
    /// Signal-to-noise ratio in dB.
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pub snr_db: f64,
    /// Seed for signal, matrix and noise.
    #[arg(long)]
    pub seed: u64,
    /// Fixture directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError::new(msg).into()
}

#[derive(Serialize)]
struct RoundRecord<'a> {
    round: usize,
    chi: f64,
    kappa: Option<f64>,
    mrf_sweeps: usize,
    mrf_degenerate: usize,
    gd_rejected_rounds: usize,
    pi_f_to_s: Option<&'a [f64]>,
    pi_s_to_f: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    rounds: Vec<RoundRecord<'a>>,
    mu_g_to_v: &'a [f64],
    nmse: Option<f64>,
}

fn diagnostics_json(out: &VspOutput, nmse: Option<f64>) -> Result<String> {
    let rounds = out
        .rounds
        .iter()
        .map(|r| RoundRecord {
            round: r.round,
            chi: r.chi,
            kappa: r.kappa,
            mrf_sweeps: r.mrf_sweeps,
            mrf_degenerate: r.mrf_degenerate,
            gd_rejected_rounds: r.gd_rejected_rounds,
            pi_f_to_s: r.pi_f_to_s.as_deref(),
            pi_s_to_f: r.pi_s_to_f.as_deref(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&Diagnostics {
        rounds,
        mu_g_to_v: &out.beliefs.mu_g_to_v,
        nmse,
    })?)
}

fn check_shapes(a: &ComplexMatrix, y: &ComplexVector) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(usage(format!(
            "--measurements has {} entries but --matrix has {} rows",
            y.len(),
            a.nrows()
        )));
    }
    Ok(())
}

pub fn cmd_recover(args: &RecoverArgs) -> Result<()> {
    let settings = args.solver.layer_onto(Settings::default())?;
    let a = read_matrix(&args.matrix).context("--matrix")?;
    let y = read_vector(&args.measurements).context("--measurements")?;
    check_shapes(&a, &y)?;
    let truth = match &args.truth {
        Some(p) => {
            let x = read_vector(p).context("--truth")?;
            if x.len() != a.ncols() {
                return Err(usage(format!("--truth has {} entries but --matrix has {} columns", x.len(), a.ncols())));
            }
            Some(x)
        }
        None => None,
    };
    settings
        .vsp
        .validate(a.ncols())
        .map_err(|e| usage(format!("invalid configuration: {e}")))?;

    let out = run_vsp(&y, &a, &settings.vsp)?;
    let error = truth.as_ref().map(|x| nmse(&out.x_hat, x)).transpose()?;

    write_vector(&args.output.join("x_hat.vspm"), &out.x_hat)?;
    write_atomic(&args.output.join("diagnostics.json"), diagnostics_json(&out, error)?.as_bytes())?;
    for r in &out.rounds {
        match r.kappa {
            Some(k) => println!("round {}: chi {:.6} kappa {:.6e}", r.round, r.chi, k),
            None => println!("round {}: chi {:.6}", r.round, r.chi),
        }
    }
    if let Some(e) = error {
        println!("nmse {e} ({:.4} dB)", nmse_db(e));
    }
    Ok(())
}

fn worker_count(requested: Option<usize>) -> Result<usize> {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let jobs = requested.unwrap_or(default);
    if jobs == 0 {
        return Err(usage("--jobs must be >= 1"));
    }
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&c| c >= 1)
                .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    Ok(cap.map_or(jobs, |c| jobs.min(c)))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let (mut spec, base) = match (&args.spec, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("--spec: cannot read {}", path.display()))?;
            parse_spec(&text, &path.display().to_string())?
        }
        (None, Some(name)) => preset_spec(name)?,
        (None, None) => return Err(usage("one of --spec or --preset is required")),
    };
    let settings = args.solver.layer_onto(base)?;
    spec.config = settings.vsp;
    spec.snr_convention = settings.snr_convention;
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.base_seed = s;
    }
    if let Some(kind) = &args.matrix_kind {
        spec.matrix_kind = kind.parse().map_err(|e| usage(format!("--matrix-kind: {e}")))?;
    }
    spec.jobs = worker_count(args.jobs)?;
    spec.record_timing = !args.no_timing;

    let problems = spec.validation_errors();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        return Err(usage(format!("invalid experiment {:?}:\n{}", spec.id, list.join("\n"))));
    }

    let result = run_experiment(&spec)?;
    let trials_path = args.out_dir.join(format!("{}_trials.csv", spec.id));
    let agg_name = format!("{}_aggregate.csv", spec.id);
    write_atomic(&trials_path, trials_csv(&spec, &result)?.as_bytes())?;
    write_atomic(&args.out_dir.join(&agg_name), aggregate_csv(&spec, &result)?.as_bytes())?;
    write_atomic(
        &args.out_dir.join(format!("{}.gp", spec.id)),
        gnuplot_script(&spec, &agg_name).as_bytes(),
    )?;

    println!("{:>6} {:>8} {:>12} {:>12} {:>7} {:>7}", "M", "SNR", "vsp (dB)", "genie (dB)", "trials", "failed");
    for a in &result.aggregates {
        println!(
            "{:>6} {:>8} {:>12.3} {:>12.3} {:>7} {:>7}",
            a.point.m, a.point.snr_db, a.mean_nmse_db, a.genie_mean_nmse_db, a.trial_count, a.failure_count
        );
    }
    println!("wrote {}", args.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    n: usize,
    m: usize,
    k: usize,
    l: usize,
    matrix_kind: String,
    snr_db: f64,
    snr_convention: String,
    seed: u64,
    sigma: f64,
    noise_variance: f64,
    support: Vec<usize>,
    nonzeros: usize,
    vsp_nmse: f64,
    vsp_nmse_db: f64,
    files: [&'static str; 5],
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let kind: MatrixKind = args.kind.parse().map_err(|e| usage(format!("--kind: {e}")))?;
    let mut settings = args.solver.layer_onto(Settings::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let inst = generate_instance(
        args.n,
        args.m,
        args.nonzeros,
        args.l,
        kind,
        args.snr_db,
        settings.snr_convention,
        &mut rng,
    )?;
    settings.vsp.sigma2 = inst.noise_var;
    settings.vsp.k_sparsity = settings.vsp.k_sparsity.or(Some(args.nonzeros));
    settings
        .vsp
        .validate(args.n)
        .map_err(|e| usage(format!("invalid configuration: {e}")))?;
    let out = run_vsp(&inst.y, &inst.a, &settings.vsp)?;
    let error = nmse(&out.x_hat, &inst.x)?;

    let dir: &Path = &args.out;
    write_matrix(&dir.join("A.vspm"), &inst.a)?;
    write_vector(&dir.join("x.vspm"), &inst.x)?;
    write_vector(&dir.join("y.vspm"), &inst.y)?;
    write_vector(&dir.join("w.vspm"), &inst.w)?;
    write_atomic(&dir.join("vsp.conf"), settings.to_text().as_bytes())?;
    let nonzeros = inst.x.iter().filter(|z| z.norm_sqr() > 0.0).count();
    let manifest = Manifest {
        n: args.n,
        m: args.m,
        k: args.nonzeros,
        l: args.l,
        matrix_kind: kind.to_string(),
        snr_db: args.snr_db,
        snr_convention: settings.snr_convention.to_string(),
        seed: args.seed,
        sigma: inst.sigma,
        noise_variance: inst.noise_var,
        support: inst.support,
        nonzeros,
        vsp_nmse: error,
        vsp_nmse_db: nmse_db(error),
        files: ["A.vspm", "x.vspm", "y.vspm", "w.vspm", "vsp.conf"],
    };
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    println!("wrote fixture to {} (vsp nmse {error})", dir.display());
    Ok(())
}
