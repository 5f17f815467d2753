//! Sum-product message passing on the Ising field over support states.
//!
//! Messages are Bernoulli parameters `lambda_{j->i} = P(s_i = +1)` carried
//! on directed edges. Each sweep visits nodes in raster order and rewrites
//! every outgoing message in place, so later updates in the same sweep see
//! the freshest values. On a chain this is exact once converged; on a grid
//! it is loopy belief propagation.

use crate::error::{Result, VspError};
use crate::model::Topology;

pub const DEFAULT_SWEEPS: usize = 10;
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// Neighbour structure with the reverse-edge lookup needed for in-place
/// message updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrfTopology {
    kind: Topology,
    neighbors: Vec<Vec<usize>>,
    /// `reverse[j][a]` is the position of `j` in `neighbors[neighbors[j][a]]`.
    reverse: Vec<Vec<usize>>,
}

impl MrfTopology {
    pub fn new(kind: Topology, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(VspError::invalid("topology", "field must have at least one node"));
        }
        kind.validate(n)?;
        let neighbors: Vec<Vec<usize>> = match kind {
            Topology::Chain => (0..n)
                .map(|i| {
                    let mut d = Vec::with_capacity(2);
                    if i > 0 {
                        d.push(i - 1);
                    }
                    if i + 1 < n {
                        d.push(i + 1);
                    }
                    d
                })
                .collect(),
            // Row-major layout: node (r, c) has index r * cols + c.
            Topology::Grid { rows, cols } => (0..n)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    let mut d = Vec::with_capacity(4);
                    if c > 0 {
                        d.push(i - 1);
                    }
                    if c + 1 < cols {
                        d.push(i + 1);
                    }
                    if r > 0 {
                        d.push(i - cols);
                    }
                    if r + 1 < rows {
                        d.push(i + cols);
                    }
                    d
                })
                .collect(),
        };
        let reverse = neighbors
            .iter()
            .enumerate()
            .map(|(j, dj)| {
                dj.iter()
                    .map(|&i| {
                        neighbors[i]
                            .iter()
                            .position(|&k| k == j)
                            .expect("adjacency is symmetric")
                    })
                    .collect()
            })
            .collect();
        Ok(MrfTopology { kind, neighbors, reverse })
    }

    pub fn chain(n: usize) -> Result<Self> {
        Self::new(Topology::Chain, n)
    }

    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        Self::new(Topology::Grid { rows, cols }, rows * cols)
    }

    pub fn kind(&self) -> Topology {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

/// Incoming messages per node, parallel to the topology's neighbour lists:
/// `incoming[i][a]` is `lambda_{neighbors(i)[a] -> i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBoard {
    incoming: Vec<Vec<f64>>,
}

impl MessageBoard {
    /// All messages uninformative (1/2).
    pub fn uniform(topo: &MrfTopology) -> Self {
        MessageBoard {
            incoming: topo.neighbors.iter().map(|d| vec![0.5; d.len()]).collect(),
        }
    }

    /// `lambda_{from -> to}`, if the edge exists.
    pub fn message(&self, topo: &MrfTopology, from: usize, to: usize) -> Option<f64> {
        let a = topo.neighbors.get(to)?.iter().position(|&k| k == from)?;
        Some(self.incoming[to][a])
    }

    pub fn incoming(&self, i: usize) -> &[f64] {
        &self.incoming[i]
    }

    pub fn all_messages(&self) -> impl Iterator<Item = f64> + '_ {
        self.incoming.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepStats {
    pub max_change: f64,
    /// Messages that fell back to 1/2 because both hypotheses underflowed.
    pub degenerate: usize,
}

/// `ln(e^x + e^y)` tolerant of `-inf` arguments.
fn log_add(x: f64, y: f64) -> f64 {
    let hi = x.max(y);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + ((x - hi).exp() + (y - hi).exp()).ln()
}

/// Probability of the `+` hypothesis from two log-weights; `None` when both vanish.
fn normalize(log_plus: f64, log_minus: f64) -> Option<f64> {
    if log_plus == f64::NEG_INFINITY && log_minus == f64::NEG_INFINITY {
        return None;
    }
    if log_plus.is_nan() || log_minus.is_nan() {
        return None;
    }
    Some(1.0 / (1.0 + (log_minus - log_plus).exp()))
}

fn check_pi(pi_in: &[f64], topo: &MrfTopology) -> Result<()> {
    VspError::check_dim("mrf pi_in", topo.len(), pi_in.len())?;
    if let Some((i, p)) = pi_in.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(VspError::Domain(format!("pi_in[{i}] = {p} is not a probability")));
    }
    Ok(())
}

/// One raster-order pass over all directed edges.
pub fn mrf_sweep(
    pi_in: &[f64],
    topo: &MrfTopology,
    alpha: f64,
    beta: f64,
    damping: f64,
    board: &mut MessageBoard,
) -> Result<SweepStats> {
    check_pi(pi_in, topo)?;
    let mut stats = SweepStats::default();
    for j in 0..topo.len() {
        let log_pi = pi_in[j].ln();
        let log_not_pi = (1.0 - pi_in[j]).ln();
        for a in 0..topo.neighbors[j].len() {
            let i = topo.neighbors[j][a];
            let (mut log_p_plus, mut log_p_minus) = (0.0, 0.0);
            for (b, &lambda) in board.incoming[j].iter().enumerate() {
                if b != a {
                    log_p_plus += lambda.ln();
                    log_p_minus += (1.0 - lambda).ln();
                }
            }
            let plus_base = log_pi - alpha + log_p_plus;
            let minus_base = log_not_pi + alpha + log_p_minus;
            let numer_plus = log_add(plus_base + beta, minus_base - beta);
            let numer_minus = log_add(plus_base - beta, minus_base + beta);
            let fresh = normalize(numer_plus, numer_minus).unwrap_or_else(|| {
                stats.degenerate += 1;
                0.5
            });

            let slot = &mut board.incoming[i][topo.reverse[j][a]];
            let updated = damping * fresh + (1.0 - damping) * *slot;
            stats.max_change = stats.max_change.max((updated - *slot).abs());
            *slot = updated;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfOutput {
    pub pi: Vec<f64>,
    pub sweeps: usize,
    pub max_change: f64,
    pub degenerate: usize,
}

/// Output probabilities `pi_{s_i -> f_i}` from the current messages.
pub fn output_beliefs(topo: &MrfTopology, alpha: f64, board: &MessageBoard) -> (Vec<f64>, usize) {
    let mut degenerate = 0;
    let pi = board
        .incoming
        .iter()
        .map(|msgs| {
            let log_plus = -alpha + msgs.iter().map(|l| l.ln()).sum::<f64>();
            let log_minus = alpha + msgs.iter().map(|l| (1.0 - l).ln()).sum::<f64>();
            normalize(log_plus, log_minus).unwrap_or_else(|| {
                degenerate += 1;
                0.5
            })
        })
        .collect();
    debug_assert_eq!(board.incoming.len(), topo.len());
    (pi, degenerate)
}

/// Runs up to `sweeps` sweeps from uniform messages, stopping early once
/// no message moves by more than 1e-8, and returns the output beliefs.
pub fn mrf_output(
    pi_in: &[f64],
    topo: &MrfTopology,
    alpha: f64,
    beta: f64,
    sweeps: usize,
) -> Result<MrfOutput> {
    mrf_output_damped(pi_in, topo, alpha, beta, sweeps, 1.0)
}

pub fn mrf_output_damped(
    pi_in: &[f64],
    topo: &MrfTopology,
    alpha: f64,
    beta: f64,
    sweeps: usize,
    damping: f64,
) -> Result<MrfOutput> {
    if sweeps == 0 {
        return Err(VspError::invalid("mrf_sweeps", "must be >= 1"));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(VspError::invalid("mrf_damping", "must lie in (0, 1]"));
    }
    check_pi(pi_in, topo)?;
    let mut board = MessageBoard::uniform(topo);
    let mut degenerate = 0;
    let mut max_change = 0.0;
    let mut done = 0;
    for _ in 0..sweeps {
        let stats = mrf_sweep(pi_in, topo, alpha, beta, damping, &mut board)?;
        degenerate += stats.degenerate;
        max_change = stats.max_change;
        done += 1;
        if stats.max_change < CONVERGENCE_TOL {
            break;
        }
    }
    let (pi, out_degenerate) = output_beliefs(topo, alpha, &board);
    Ok(MrfOutput {
        pi,
        sweeps: done,
        max_change,
        degenerate: degenerate + out_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// P(s_i = +1) under p(s) * prod_{k != i} nu_k(s_k), by enumeration.
    fn cavity_marginals(pi_in: &[f64], topo: &MrfTopology, alpha: f64, beta: f64) -> Vec<f64> {
        let n = pi_in.len();
        let mut plus = vec![0.0; n];
        let mut total = vec![0.0; n];
        for mask in 0u32..(1 << n) {
            let s: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let mut energy = 0.0;
            for i in 0..n {
                energy -= alpha * s[i];
                for &k in topo.neighbors(i) {
                    if k > i {
                        energy += beta * s[i] * s[k];
                    }
                }
            }
            let prior = energy.exp();
            let evidence: Vec<f64> = (0..n).map(|k| if s[k] > 0.0 { pi_in[k] } else { 1.0 - pi_in[k] }).collect();
            for i in 0..n {
                let w = prior * (0..n).filter(|&k| k != i).map(|k| evidence[k]).product::<f64>();
                total[i] += w;
                if s[i] > 0.0 {
                    plus[i] += w;
                }
            }
        }
        plus.iter().zip(&total).map(|(p, t)| p / t).collect()
    }

    #[test]
    fn chain_and_grid_adjacency_is_symmetric() {
        for topo in [MrfTopology::chain(7).unwrap(), MrfTopology::grid(3, 4).unwrap()] {
            for i in 0..topo.len() {
                for &j in topo.neighbors(i) {
                    assert!(topo.neighbors(j).contains(&i));
                    assert_ne!(i, j);
                }
            }
        }
        let g = MrfTopology::grid(3, 3).unwrap();
        assert_eq!(g.neighbors(4).len(), 4);
        assert_eq!(g.neighbors(0).len(), 2);
        assert!(MrfTopology::new(Topology::Grid { rows: 2, cols: 2 }, 5).is_err());
    }

    #[test]
    fn zero_coupling_gives_uninformative_messages() {
        let topo = MrfTopology::grid(3, 3).unwrap();
        let pi = [0.9, 0.1, 0.3, 0.7, 0.5, 1.0, 0.0, 0.2, 0.6];
        let mut board = MessageBoard::uniform(&topo);
        mrf_sweep(&pi, &topo, 0.4, 0.0, 1.0, &mut board).unwrap();
        assert!(board.all_messages().all(|l| (l - 0.5).abs() < 1e-15));
    }

    #[test]
    fn hand_evaluated_chain_message() {
        let topo = MrfTopology::chain(3).unwrap();
        let mut board = MessageBoard::uniform(&topo);
        mrf_sweep(&[1.0, 0.5, 0.5], &topo, 0.0, 1.0, 1.0, &mut board).unwrap();
        let e = 1f64.exp();
        let expected = e / (e + 1.0 / e);
        assert!((board.message(&topo, 0, 1).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn output_without_coupling() {
        let topo = MrfTopology::chain(5).unwrap();
        let out = mrf_output(&[0.2, 0.4, 0.6, 0.8, 1.0], &topo, 0.0, 0.0, 10).unwrap();
        assert!(out.pi.iter().all(|p| (p - 0.5).abs() < 1e-15));
        let alpha = 0.7;
        let out = mrf_output(&[0.2, 0.4, 0.6, 0.8, 1.0], &topo, alpha, 0.0, 10).unwrap();
        let expected = 1.0 / (1.0 + (2.0 * alpha).exp());
        assert!(out.pi.iter().all(|p| (p - expected).abs() < 1e-15));
    }

    #[test]
    fn step_pattern_matches_enumeration() {
        let topo = MrfTopology::chain(6).unwrap();
        let pi = [0.9, 0.9, 0.9, 0.1, 0.1, 0.1];
        let out = mrf_output(&pi, &topo, 0.3, 0.8, 10).unwrap();
        let exact = cavity_marginals(&pi, &topo, 0.3, 0.8);
        for (a, b) in out.pi.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn chains_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for n in 1..=10 {
            let topo = MrfTopology::chain(n).unwrap();
            for _ in 0..5 {
                let pi: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                let alpha = rng.random_range(-1.5..1.5);
                let beta = rng.random_range(0.0..2.0);
                let out = mrf_output(&pi, &topo, alpha, beta, 4 * n + 4).unwrap();
                let exact = cavity_marginals(&pi, &topo, alpha, beta);
                for (a, b) in out.pi.iter().zip(&exact) {
                    assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn spin_flip_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let topo = MrfTopology::grid(4, 5).unwrap();
        for _ in 0..10 {
            let pi: Vec<f64> = (0..20).map(|_| rng.random()).collect();
            let flipped: Vec<f64> = pi.iter().map(|p| 1.0 - p).collect();
            let alpha = rng.random_range(-1.0..1.0);
            let beta = rng.random_range(0.0..1.5);
            let a = mrf_output(&pi, &topo, alpha, beta, 10).unwrap();
            let b = mrf_output(&flipped, &topo, -alpha, beta, 10).unwrap();
            for (x, y) in a.pi.iter().zip(&b.pi) {
                assert!((x - (1.0 - y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_messages_fall_back_to_half() {
        // pi = 1 at the centre with lambda_{2->1} = 0 leaves both hypotheses
        // of the message 1 -> 0 at zero weight.
        let topo = MrfTopology::chain(3).unwrap();
        let mut board = MessageBoard::uniform(&topo);
        board.incoming[1][1] = 0.0;
        let stats = mrf_sweep(&[0.5, 1.0, 0.5], &topo, 0.0, 1.0, 1.0, &mut board).unwrap();
        assert!(stats.degenerate >= 1);
        assert_eq!(board.message(&topo, 1, 0).unwrap(), 0.5);
    }

    #[test]
    fn rejects_invalid_probabilities() {
        let topo = MrfTopology::chain(2).unwrap();
        assert!(mrf_output(&[0.5, 1.5], &topo, 0.0, 1.0, 5).is_err());
        assert!(mrf_output(&[0.5], &topo, 0.0, 1.0, 5).is_err());
        assert!(mrf_output(&[0.5, 0.5], &topo, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn grid_coupling_is_monotone_with_positive_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let topo = MrfTopology::grid(3, 3).unwrap();
        for _ in 0..10 {
            let pi: Vec<f64> = (0..9).map(|_| rng.random_range(0.55..0.95)).collect();
            // Keep every local field nonnegative: alpha <= min half-logit.
            let min_half_logit = pi.iter().map(|p| 0.5 * (p / (1.0 - p)).ln()).fold(f64::INFINITY, f64::min);
            let alpha = rng.random_range(-0.5..min_half_logit);
            let mut prev_bp = vec![0.0; 9];
            let mut prev_exact = vec![0.0; 9];
            for step in 0..=40 {
                let beta = 0.05 * step as f64;
                let bp = mrf_output(&pi, &topo, alpha, beta, 200).unwrap().pi;
                let exact = cavity_marginals(&pi, &topo, alpha, beta);
                for i in 0..9 {
                    assert!(bp[i] >= prev_bp[i] - 1e-9, "bp node {i} beta {beta}");
                    assert!(exact[i] >= prev_exact[i] - 1e-12, "exact node {i} beta {beta}");
                    assert!((0.0..=1.0).contains(&bp[i]));
                }
                prev_bp = bp;
                prev_exact = exact;
            }
        }
    }

    #[test]
    fn messages_stay_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let topo = MrfTopology::grid(6, 6).unwrap();
        let pi: Vec<f64> = (0..36).map(|_| if rng.random::<bool>() { 1.0 } else { rng.random() }).collect();
        let mut board = MessageBoard::uniform(&topo);
        for _ in 0..20 {
            mrf_sweep(&pi, &topo, 0.3, 2.5, 1.0, &mut board).unwrap();
            assert!(board.all_messages().all(|l| (0.0..=1.0).contains(&l)));
        }
    }
}
