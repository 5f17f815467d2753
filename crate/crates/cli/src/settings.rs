//! Layered solver settings: built-in defaults, then a `key = value` config
//! file, then command-line flags. All three layers funnel through
//! [`Settings::apply`], so a key means the same thing everywhere.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use vsp_core::bench::SnrConvention;
use vsp_core::model::InitStrategy;
use vsp_core::{SolverKind, Topology, VspConfig};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub vsp: VspConfig,
    pub snr_convention: SnrConvention,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            vsp: VspConfig::default(),
            snr_convention: SnrConvention::Total,
        }
    }
}

pub const KEYS: [&str; 20] = [
    "alpha",
    "beta",
    "rho",
    "gamma_a",
    "gamma_b",
    "t_out",
    "t_in",
    "vartheta",
    "sigma2",
    "k",
    "solver",
    "topology",
    "mrf_sweeps",
    "mrf_damping",
    "pi_floor",
    "eps0",
    "shrink",
    "max_halvings",
    "gd_rel_tol",
    "init",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

impl Settings {
    /// Sets one key. Keys accept either `snake_case` or `kebab-case`.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let c = &mut self.vsp;
        match key.as_str() {
            "alpha" => c.mrf.alpha = num(&key, value)?,
            "beta" => c.mrf.beta = num(&key, value)?,
            "rho" => c.mrf.rho = num(&key, value)?,
            "gamma_a" => c.gamma.a = num(&key, value)?,
            "gamma_b" => c.gamma.b = num(&key, value)?,
            "t_out" => c.t_out = num(&key, value)?,
            "t_in" => c.t_in = num(&key, value)?,
            "vartheta" => c.vartheta = num(&key, value)?,
            "sigma2" => c.sigma2 = num(&key, value)?,
            "k" => c.k_sparsity = Some(num(&key, value)?),
            "solver" => c.solver = value.parse::<SolverKind>().map_err(|e| anyhow!("solver: {e}"))?,
            "topology" => c.topology = value.parse::<Topology>().map_err(|e| anyhow!("topology: {e}"))?,
            "mrf_sweeps" => c.mrf_sweeps = num(&key, value)?,
            "mrf_damping" => c.mrf_damping = num(&key, value)?,
            "pi_floor" => c.pi_floor = num(&key, value)?,
            "eps0" => c.line_search.eps0 = num(&key, value)?,
            "shrink" => c.line_search.shrink = num(&key, value)?,
            "max_halvings" => c.line_search.max_halvings = num(&key, value)?,
            "gd_rel_tol" => c.gd_rel_tol = if value == "none" { None } else { Some(num(&key, value)?) },
            "init" => {
                c.init = if value == "power" {
                    InitStrategy::PowerEstimate
                } else {
                    InitStrategy::Constant(num(&key, value)?)
                }
            }
            "snr_convention" => self.snr_convention = value.parse().map_err(|e| anyhow!("snr_convention: {e}"))?,
            other => return Err(anyhow!("unknown setting {other:?}; known keys: {}, snr_convention", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies a `key = value` text. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError::new(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.apply(key, value)
                .map_err(|e| UsageError::new(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("--config: cannot read {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its current value, in a form [`Settings::apply_text`]
    /// reads back exactly.
    pub fn to_text(&self) -> String {
        let c = &self.vsp;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("alpha", c.mrf.alpha.to_string());
        put("beta", c.mrf.beta.to_string());
        put("rho", c.mrf.rho.to_string());
        put("gamma_a", c.gamma.a.to_string());
        put("gamma_b", c.gamma.b.to_string());
        put("t_out", c.t_out.to_string());
        put("t_in", c.t_in.to_string());
        put("vartheta", c.vartheta.to_string());
        put("sigma2", c.sigma2.to_string());
        if let Some(k) = c.k_sparsity {
            put("k", k.to_string());
        }
        put("solver", c.solver.to_string());
        put("topology", c.topology.to_string());
        put("mrf_sweeps", c.mrf_sweeps.to_string());
        put("mrf_damping", c.mrf_damping.to_string());
        put("pi_floor", c.pi_floor.to_string());
        put("eps0", c.line_search.eps0.to_string());
        put("shrink", c.line_search.shrink.to_string());
        put("max_halvings", c.line_search.max_halvings.to_string());
        put("gd_rel_tol", c.gd_rel_tol.map_or("none".to_string(), |t| t.to_string()));
        put(
            "init",
            match c.init {
                InitStrategy::PowerEstimate => "power".to_string(),
                InitStrategy::Constant(v) => v.to_string(),
            },
        );
        put("snr_convention", self.snr_convention.to_string());
        s
    }
}

/// Solver flags shared by every subcommand. Unset flags leave lower layers
/// untouched.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// `key = value` config file applied before these flags.
    #[arg(long, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    /// MRF sparsity bias.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// MRF coupling strength.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Fraction of nonzeros, used to default K.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Shape of the Gamma part of the variance prior.
    #[arg(long)]
    pub gamma_a: Option<f64>,
    /// Rate of the Gamma part of the variance prior.
    #[arg(long)]
    pub gamma_b: Option<f64>,
    /// Outer rounds.
    #[arg(long)]
    pub t_out: Option<usize>,
    /// Inner solver rounds.
    #[arg(long)]
    pub t_in: Option<usize>,
    /// K' = round(vartheta * K), vartheta in [1, 2].
    #[arg(long)]
    pub vartheta: Option<f64>,
    /// Per-component noise variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Number of nonzeros.
    #[arg(long)]
    pub k: Option<usize>,
    /// Inner solver: gd or elbo.
    #[arg(long)]
    pub solver: Option<String>,
    /// chain or grid:RxC.
    #[arg(long)]
    pub topology: Option<String>,
    /// Message-passing sweeps per MRF call.
    #[arg(long)]
    pub mrf_sweeps: Option<usize>,
    /// Message damping in (0, 1]; 1 means undamped.
    #[arg(long)]
    pub mrf_damping: Option<f64>,
    /// Smallest support probability used when mapping back to variances.
    #[arg(long)]
    pub pi_floor: Option<f64>,
    /// Line search initial step.
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Line search shrink factor.
    #[arg(long)]
    pub shrink: Option<f64>,
    /// Line search step halvings before a round is rejected.
    #[arg(long)]
    pub max_halvings: Option<usize>,
    /// Relative chi change that stops the GD solver early.
    #[arg(long)]
    pub gd_rel_tol: Option<f64>,
    /// Initial variance: `power` or a positive constant.
    #[arg(long)]
    pub init: Option<String>,
    /// total or per-component.
    #[arg(long)]
    pub snr_convention: Option<String>,
}

impl SolverFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        let u = |v: Option<usize>| v.map(|x| x.to_string());
        push("alpha", s(self.alpha));
        push("beta", s(self.beta));
        push("rho", s(self.rho));
        push("gamma_a", s(self.gamma_a));
        push("gamma_b", s(self.gamma_b));
        push("t_out", u(self.t_out));
        push("t_in", u(self.t_in));
        push("vartheta", s(self.vartheta));
        push("sigma2", s(self.sigma2));
        push("k", u(self.k));
        push("solver", self.solver.clone());
        push("topology", self.topology.clone());
        push("mrf_sweeps", u(self.mrf_sweeps));
        push("mrf_damping", s(self.mrf_damping));
        push("pi_floor", s(self.pi_floor));
        push("eps0", s(self.eps0));
        push("shrink", s(self.shrink));
        push("max_halvings", u(self.max_halvings));
        push("gd_rel_tol", s(self.gd_rel_tol));
        push("init", self.init.clone());
        push("snr_convention", self.snr_convention.clone());
        out
    }

    /// Applies the config file, then the flags, on top of `base`.
    pub fn layer_onto(&self, mut base: Settings) -> Result<Settings> {
        if let Some(path) = &self.config {
            base.apply_file(path)?;
        }
        for (key, value) in self.pairs() {
            base.apply(key, &value)
                .map_err(|e| UsageError::new(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
        Ok(base)
    }
}
