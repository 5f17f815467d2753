//! Hierarchical prior: Gamma-distributed variances switched on and off by
//! binary Ising states, plus the configuration carried by a VSP run.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, VspError};
use crate::gd::LineSearchParams;

/// Shape/rate parameters of the Gamma part of the variance prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub a: f64,
    pub b: f64,
}

impl GammaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = GammaParams { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(VspError::invalid("a", format!("shape must be > 0, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(VspError::invalid("b", format!("rate must be > 0, got {}", self.b)));
        }
        if !(self.a / self.b).is_finite() {
            return Err(VspError::invalid("b", "mean a/b is not finite"));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.a / self.b
    }
}

impl Default for GammaParams {
    fn default() -> Self {
        GammaParams { a: 1e-10, b: 1e-10 }
    }
}

/// Ising parameters of the support-state prior.
///
/// `alpha` biases states towards -1 (sparser), `beta` couples neighbours.
/// `rho` is the nominal fraction of nonzeros, used only to default the
/// sparsity level when it is not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfParams {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
}

impl MrfParams {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(VspError::invalid("alpha", "must be finite"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(VspError::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(VspError::invalid("rho", format!("must lie in [0, 1], got {}", self.rho)));
        }
        Ok(())
    }
}

impl Default for MrfParams {
    fn default() -> Self {
        MrfParams {
            alpha: 0.3,
            beta: 0.8,
            rho: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Gd,
    Elbo,
}

impl std::str::FromStr for SolverKind {
    type Err = VspError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" => Ok(SolverKind::Gd),
            "elbo" => Ok(SolverKind::Elbo),
            other => Err(VspError::invalid("solver", format!("expected gd|elbo, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Gd => "gd",
            SolverKind::Elbo => "elbo",
        })
    }
}

/// Shape of the support-state field. A chain takes its length from the
/// signal dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Chain,
    Grid { rows: usize, cols: usize },
}

impl Topology {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Topology::Chain => Ok(()),
            Topology::Grid { rows, cols } => {
                if rows == 0 || cols == 0 || rows * cols != n {
                    Err(VspError::invalid(
                        "topology",
                        format!("grid {rows}x{cols} does not cover N = {n}"),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = VspError;

    /// Accepts `chain` or `grid:RxC`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "chain" {
            return Ok(Topology::Chain);
        }
        let bad = || VspError::invalid("topology", format!("expected chain|grid:RxC, got `{s}`"));
        let dims = s.strip_prefix("grid:").ok_or_else(bad)?;
        let (r, c) = dims.split_once('x').ok_or_else(bad)?;
        let rows = r.parse().map_err(|_| bad())?;
        let cols = c.parse().map_err(|_| bad())?;
        Ok(Topology::Grid { rows, cols })
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Topology::Chain => f.write_str("chain"),
            Topology::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
        }
    }
}

/// How the variance means entering the first inner solve are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStrategy {
    /// `||y||^2 / ||A||_F^2 * N / K`: average power per active coordinate.
    PowerEstimate,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VspConfig {
    pub gamma: GammaParams,
    pub mrf: MrfParams,
    pub t_out: usize,
    pub t_in: usize,
    pub vartheta: f64,
    pub sigma2: f64,
    /// Number of nonzeros K; `None` defaults to `round(rho * N)`.
    pub k_sparsity: Option<usize>,
    pub solver: SolverKind,
    pub topology: Topology,
    pub mrf_sweeps: usize,
    pub mrf_damping: f64,
    pub pi_floor: f64,
    pub line_search: LineSearchParams,
    pub gd_rel_tol: Option<f64>,
    pub init: InitStrategy,
}

impl Default for VspConfig {
    fn default() -> Self {
        VspConfig {
            gamma: GammaParams::default(),
            mrf: MrfParams::default(),
            t_out: 2,
            t_in: 30,
            vartheta: 2.0,
            sigma2: 1e-2,
            k_sparsity: None,
            solver: SolverKind::Elbo,
            topology: Topology::Chain,
            mrf_sweeps: 10,
            mrf_damping: 1.0,
            pi_floor: 1e-4,
            line_search: LineSearchParams::default(),
            gd_rel_tol: None,
            init: InitStrategy::PowerEstimate,
        }
    }
}

impl VspConfig {
    /// Checks every field against signal dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.gamma.validate()?;
        self.mrf.validate()?;
        if self.t_out == 0 {
            return Err(VspError::invalid("t_out", "must be >= 1"));
        }
        if self.t_in == 0 {
            return Err(VspError::invalid("t_in", "must be >= 1"));
        }
        if !(1.0..=2.0).contains(&self.vartheta) {
            return Err(VspError::invalid(
                "vartheta",
                format!("must lie in [1, 2], got {}", self.vartheta),
            ));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(VspError::invalid("sigma2", format!("must be > 0, got {}", self.sigma2)));
        }
        if let Some(k) = self.k_sparsity {
            if k == 0 || k > n {
                return Err(VspError::invalid("k_sparsity", format!("must lie in [1, {n}], got {k}")));
            }
        }
        if self.mrf_sweeps == 0 {
            return Err(VspError::invalid("mrf_sweeps", "must be >= 1"));
        }
        if !(self.mrf_damping > 0.0 && self.mrf_damping <= 1.0) {
            return Err(VspError::invalid("mrf_damping", "must lie in (0, 1]"));
        }
        if !(self.pi_floor > 0.0 && self.pi_floor < 1.0) {
            return Err(VspError::invalid("pi_floor", "must lie in (0, 1)"));
        }
        if let InitStrategy::Constant(c) = self.init {
            if !(c.is_finite() && c > 0.0) {
                return Err(VspError::invalid("init", "constant initial variance must be > 0"));
            }
        }
        self.line_search.validate()?;
        self.topology.validate(n)
    }

    /// Sparsity level K for a signal of length `n`.
    pub fn sparsity(&self, n: usize) -> usize {
        self.k_sparsity
            .unwrap_or_else(|| (self.mrf.rho * n as f64).round() as usize)
            .clamp(1, n.max(1))
    }

    /// K' = round(vartheta * K), kept inside [1, n].
    pub fn k_prime(&self, n: usize) -> usize {
        ((self.vartheta * self.sparsity(n) as f64).round() as usize).clamp(1, n.max(1))
    }
}

/// Beliefs exchanged between the linear module and the MRF.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub mu_v_to_g: Vec<f64>,
    pub mu_g_to_v: Vec<f64>,
    pub pi_f_to_s: Vec<f64>,
    pub pi_s_to_f: Vec<f64>,
}

impl BeliefState {
    pub fn new(mu_v_to_g: Vec<f64>) -> Self {
        let n = mu_v_to_g.len();
        BeliefState {
            mu_v_to_g,
            mu_g_to_v: vec![0.0; n],
            pi_f_to_s: vec![0.0; n],
            pi_s_to_f: vec![0.0; n],
        }
    }

    pub fn is_valid(&self) -> bool {
        let mu_ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        let pi_ok = |v: &[f64]| v.iter().all(|x| (0.0..=1.0).contains(x));
        mu_ok(&self.mu_v_to_g) && mu_ok(&self.mu_g_to_v) && pi_ok(&self.pi_f_to_s) && pi_ok(&self.pi_s_to_f)
    }
}

/// Gamma density with shape `a` and rate `b`; zero for `v <= 0`.
pub fn gamma_pdf(v: f64, p: GammaParams) -> f64 {
    if v <= 0.0 || v.is_nan() {
        return 0.0;
    }
    if v.is_infinite() {
        return 0.0;
    }
    let log_pdf = p.a * p.b.ln() + (p.a - 1.0) * v.ln() - p.b * v - ln_gamma(p.a);
    log_pdf.exp()
}

/// Draws `n` i.i.d. variances from `rho * Gamma(a, b) + (1 - rho) * delta(0)`.
pub fn sample_block_prior<R: Rng + ?Sized>(
    n: usize,
    p: GammaParams,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(VspError::invalid("rho", format!("must lie in [0, 1], got {rho}")));
    }
    if n == 0 {
        return Err(VspError::invalid("n", "must be >= 1"));
    }
    p.validate()?;
    let gamma = Gamma::new(p.a, 1.0 / p.b).map_err(|e| VspError::invalid("gamma", e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < rho {
                gamma.sample(rng)
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson on the log-substituted integrand `f(e^u) e^u`.
    fn integrate_positive_axis(f: impl Fn(f64) -> f64) -> f64 {
        let g = |u: f64| {
            let v = u.exp();
            f(v) * v
        };
        fn simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = g(lm);
            let frm = g(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + simpson(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        // Split the range so the adaptive rule sees the bulk of the mass.
        let edges: Vec<f64> = (-100..=8).map(|k| k as f64).collect();
        edges
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let (fa, fm, fb) = (g(a), g(0.5 * (a + b)), g(b));
                let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
                simpson(&g, a, b, fa, fm, fb, whole, 1e-12, 40)
            })
            .sum()
    }

    #[test]
    fn gamma_pdf_is_zero_off_support() {
        let p = GammaParams::new(2.0, 3.0).unwrap();
        assert_eq!(gamma_pdf(-1.0, p), 0.0);
        assert_eq!(gamma_pdf(0.0, p), 0.0);
    }

    #[test]
    fn gamma_pdf_unit_exponential() {
        let p = GammaParams::new(1.0, 1.0).unwrap();
        assert!((gamma_pdf(1.0, p) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gamma_pdf_mean_by_quadrature() {
        let p = GammaParams::new(3.0, 2.0).unwrap();
        let mean = integrate_positive_axis(|v| v * gamma_pdf(v, p));
        assert!((mean - 1.5).abs() < 1e-8, "mean {mean}");
    }

    #[test]
    fn gamma_pdf_normalised() {
        for &a in &[0.5, 1.0, 3.0] {
            for &b in &[0.5, 1.0, 3.0] {
                let p = GammaParams::new(a, b).unwrap();
                let total = integrate_positive_axis(|v| gamma_pdf(v, p));
                assert!((total - 1.0).abs() < 1e-6, "a={a} b={b} total={total}");
            }
        }
    }

    #[test]
    fn gamma_pdf_survives_noninformative_shape() {
        let p = GammaParams::default();
        let d = gamma_pdf(1.0, p);
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn block_prior_rho_zero_is_all_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = sample_block_prior(4, GammaParams::new(2.0, 1.0).unwrap(), 0.0, &mut rng).unwrap();
        assert_eq!(v, vec![0.0; 4]);
    }

    #[test]
    fn block_prior_rejects_bad_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GammaParams::new(2.0, 1.0).unwrap();
        assert!(sample_block_prior(4, p, 1.5, &mut rng).is_err());
        assert!(sample_block_prior(4, p, -0.1, &mut rng).is_err());
    }

    #[test]
    fn block_prior_monte_carlo() {
        let p = GammaParams::new(2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let v = sample_block_prior(n, p, 0.3, &mut rng).unwrap();
        assert!(v.iter().all(|x| *x >= 0.0));
        let zeros = v.iter().filter(|x| **x == 0.0).count() as f64;
        let frac = 1.0 - zeros / n as f64;
        assert!((frac - 0.3).abs() < 0.01, "nonzero fraction {frac}");
        // Binomial(n, 0.7) zero count within 4 standard deviations.
        let sd = (n as f64 * 0.7 * 0.3).sqrt();
        assert!((zeros - 0.7 * n as f64).abs() < 4.0 * sd);

        let v = sample_block_prior(n, p, 1.0, &mut rng).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn config_validation() {
        let cfg = VspConfig::default();
        assert!(cfg.validate(10).is_ok());
        let bad = VspConfig { vartheta: 2.5, ..VspConfig::default() };
        assert!(bad.validate(10).is_err());
        let bad = VspConfig { topology: Topology::Grid { rows: 3, cols: 3 }, ..VspConfig::default() };
        assert!(bad.validate(10).is_err());
        assert!(bad.validate(9).is_ok());
        let bad = VspConfig { t_in: 0, ..VspConfig::default() };
        assert!(bad.validate(10).is_err());
    }

    #[test]
    fn sparsity_defaults_from_rho() {
        let cfg = VspConfig { mrf: MrfParams { rho: 0.2, ..MrfParams::default() }, ..VspConfig::default() };
        assert_eq!(cfg.sparsity(50), 10);
        assert_eq!(cfg.k_prime(50), 20);
        let cfg = VspConfig { k_sparsity: Some(7), vartheta: 1.5, ..cfg };
        assert_eq!(cfg.k_prime(50), 11);
    }

    #[test]
    fn topology_parse_roundtrip() {
        let t: Topology = "grid:28x28".parse().unwrap();
        assert_eq!(t, Topology::Grid { rows: 28, cols: 28 });
        assert_eq!(t.to_string().parse::<Topology>().unwrap(), t);
        assert!("grid:3".parse::<Topology>().is_err());
    }
}
