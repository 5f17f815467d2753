//! TOML experiment descriptions for `vsp bench --spec`.
//!
//! ```toml
//! id = "small"
//! n = 100
//! k = 20
//! l = 2
//! m = [60]                 # or a single integer
//! snr_db = [10, 20, 30]    # or a single number
//! matrix_kind = "cropped_hermitian"
//! trials = 50
//! base_seed = 7
//! snr_convention = "total"
//!
//! [solver]                 # any config key
//! t_in = 30
//! ```

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Deserialize;
use vsp_core::bench::{presets, ExperimentSpec, MatrixKind};

use crate::settings::Settings;
use crate::UsageError;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    id: String,
    n: usize,
    k: usize,
    l: usize,
    m: OneOrMany<usize>,
    snr_db: OneOrMany<f64>,
    matrix_kind: String,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    base_seed: u64,
    snr_convention: Option<String>,
    #[serde(default)]
    solver: BTreeMap<String, toml::Value>,
}

fn default_trials() -> usize {
    presets::DEFAULT_TRIALS
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a spec file into an experiment plus its solver-settings layer.
pub fn parse_spec(text: &str, origin: &str) -> Result<(ExperimentSpec, Settings)> {
    let file: SpecFile = toml::from_str(text).map_err(|e| UsageError::new(format!("{origin}: {e}")))?;
    let kind: MatrixKind = file
        .matrix_kind
        .parse()
        .map_err(|e| UsageError::new(format!("{origin}: {e}")))?;
    let mut settings = Settings::default();
    if let Some(conv) = &file.snr_convention {
        settings
            .apply("snr_convention", conv)
            .map_err(|e| UsageError::new(format!("{origin}: {e}")))?;
    }
    for (key, value) in &file.solver {
        settings
            .apply(key, &value_text(value))
            .map_err(|e| UsageError::new(format!("{origin}: [solver] {e}")))?;
    }
    let mut spec = ExperimentSpec::new(file.id, file.n, file.k, file.l, kind);
    spec.m_grid = file.m.into_vec();
    spec.snr_grid = file.snr_db.into_vec();
    spec.trials = file.trials;
    spec.base_seed = file.base_seed;
    Ok((spec, settings))
}

/// A preset as an experiment plus its settings layer.
pub fn preset_spec(name: &str) -> Result<(ExperimentSpec, Settings)> {
    let spec = presets::preset(name)
        .ok_or_else(|| UsageError::new(format!("--preset: unknown preset {name:?}; valid presets: {}", presets::NAMES.join(", "))))?;
    let settings = Settings {
        vsp: spec.config.clone(),
        snr_convention: spec.snr_convention,
    };
    Ok((spec, settings))
}
