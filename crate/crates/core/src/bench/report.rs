use std::fmt::Write as _;

use super::experiment::{ExperimentResult, ExperimentSpec, TrialOutcome};
use crate::error::{Result, VspError};

pub const TRIAL_CSV_HEADER: [&str; 14] = [
    "experiment_id",
    "matrix_kind",
    "N",
    "M",
    "K",
    "L",
    "snr_db",
    "trial",
    "seed",
    "algorithm",
    "nmse",
    "nmse_db",
    "runtime_ms",
    "status",
];

const AGGREGATE_CSV_HEADER: [&str; 12] = [
    "experiment_id",
    "matrix_kind",
    "snr_convention",
    "N",
    "M",
    "K",
    "L",
    "snr_db",
    "mean_nmse_db",
    "genie_mean_nmse_db",
    "trial_count",
    "failure_count",
];

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| VspError::Domain(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| VspError::Domain(format!("csv encoding: {e}")))
}

fn csv_err(e: csv::Error) -> VspError {
    VspError::Domain(format!("csv: {e}"))
}

/// Two rows per trial, the solver then the genie bound, ordered by grid
/// point and trial index.
pub fn trials_csv(spec: &ExperimentSpec, result: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIAL_CSV_HEADER).map_err(csv_err)?;
    for r in &result.trials {
        for (tag, outcome) in [(spec.algorithm_tag(), &r.vsp), ("genie", &r.genie)] {
            let (nmse, nmse_db, runtime, status) = match outcome {
                TrialOutcome::Ok { nmse, runtime_ms } => (
                    nmse.to_string(),
                    outcome.nmse_db().unwrap_or(f64::NAN).to_string(),
                    format!("{runtime_ms:.3}"),
                    "ok".to_string(),
                ),
                TrialOutcome::Failed(msg) => (String::new(), String::new(), String::new(), format!("error: {msg}")),
            };
            w.write_record([
                spec.id.clone(),
                spec.matrix_kind.to_string(),
                spec.n.to_string(),
                r.point.m.to_string(),
                spec.k.to_string(),
                spec.l.to_string(),
                r.point.snr_db.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                tag.to_string(),
                nmse,
                nmse_db,
                runtime,
                status,
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn aggregate_csv(spec: &ExperimentSpec, result: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_CSV_HEADER).map_err(csv_err)?;
    for agg in &result.aggregates {
        w.write_record([
            spec.id.clone(),
            spec.matrix_kind.to_string(),
            spec.snr_convention.to_string(),
            spec.n.to_string(),
            agg.point.m.to_string(),
            spec.k.to_string(),
            spec.l.to_string(),
            agg.point.snr_db.to_string(),
            format!("{:.6}", agg.mean_nmse_db),
            format!("{:.6}", agg.genie_mean_nmse_db),
            agg.trial_count.to_string(),
            agg.failure_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// A gnuplot script drawing mean NMSE (dB) against SNR, or against M when
/// the sweep has a single SNR value, from the aggregate CSV at `data_file`.
pub fn gnuplot_script(spec: &ExperimentSpec, data_file: &str) -> String {
    // Column positions in the aggregate CSV.
    const M_COL: usize = 5;
    const SNR_COL: usize = 8;
    const MEAN_COL: usize = 9;
    const GENIE_COL: usize = 10;

    let versus_m = spec.snr_grid.len() == 1 && spec.m_grid.len() > 1;
    let (x_col, x_label, curves): (usize, &str, Vec<(usize, String, String)>) = if versus_m {
        let snr = spec.snr_grid[0];
        (M_COL, "number of measurements M", vec![(SNR_COL, format!("{snr}"), format!("SNR = {snr} dB"))])
    } else {
        (
            SNR_COL,
            "SNR (dB)",
            spec.m_grid.iter().map(|m| (M_COL, m.to_string(), format!("M = {m}"))).collect(),
        )
    };

    let mut s = String::new();
    let _ = writeln!(s, "# {}: N={} K={} L={} matrix={}", spec.id, spec.n, spec.k, spec.l, spec.matrix_kind);
    let _ = writeln!(
        s,
        "# noise convention: {} (SNR = 20 log10(||Ax|| / sigma)), {} trials per point",
        spec.snr_convention, spec.trials
    );
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set terminal pngcairo size 800,600");
    let _ = writeln!(s, "set output '{}.png'", spec.id);
    let _ = writeln!(s, "set xlabel '{x_label}'");
    let _ = writeln!(s, "set ylabel 'NMSE (dB)'");
    let _ = writeln!(s, "set grid");
    let mut plots = Vec::new();
    for (filter_col, value, title) in &curves {
        for (col, name, style) in [(MEAN_COL, spec.algorithm_tag(), "lp pt 7"), (GENIE_COL, "genie", "l dt 2")] {
            plots.push(format!(
                "'{data_file}' using {x_col}:(${filter_col}=={value} ? ${col} : 1/0) with {style} title '{name}, {title}'"
            ));
        }
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}
