use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Result, VspError};
use crate::{ComplexVector, C64};

/// Proportion draws attempted before the geometry is declared infeasible.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseSignal {
    pub x: ComplexVector,
    /// Sorted indices of the nonzero coefficients.
    pub support: Vec<usize>,
}

/// One draw from CN(0, 1).
pub fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Splits `total` by `props`: `ceil(total * r_l)` for all but the last part,
/// which takes the remainder. `None` if the remainder is not positive.
fn split_by(total: usize, props: &[f64]) -> Option<Vec<usize>> {
    let mut sizes: Vec<usize> = props[..props.len() - 1]
        .iter()
        .map(|r| (total as f64 * r).ceil() as usize)
        .collect();
    let used: usize = sizes.iter().sum();
    if used >= total {
        return None;
    }
    sizes.push(total - used);
    Some(sizes)
}

/// `K` nonzeros in `L` contiguous blocks, each placed inside its own
/// super-block of `{0..N}`. Block and super-block sizes share the same
/// uniform Dirichlet proportions.
pub fn gen_block_sparse_signal<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    l: usize,
    rng: &mut R,
) -> Result<BlockSparseSignal> {
    if l == 0 || l > k || k > n {
        return Err(VspError::invalid("L, K, N", format!("need 1 <= L <= K <= N, got L={l}, K={k}, N={n}")));
    }
    for _ in 0..MAX_REDRAWS {
        let raw: Vec<f64> = (0..l).map(|_| Exp1.sample(rng)).collect();
        let sum: f64 = raw.iter().sum();
        let props: Vec<f64> = raw.iter().map(|r| r / sum).collect();

        let Some(blocks) = split_by(k, &props) else { continue };
        let Some(supers) = split_by(n, &props) else { continue };
        if blocks.iter().zip(&supers).any(|(b, s)| b > s) {
            continue;
        }

        let mut x = ComplexVector::zeros(n);
        let mut support = Vec::with_capacity(k);
        let mut offset = 0;
        for (&b, &s) in blocks.iter().zip(&supers) {
            let start = offset + rng.random_range(0..=s - b);
            for i in start..start + b {
                x[i] = standard_complex_gaussian(rng);
                support.push(i);
            }
            offset += s;
        }
        return Ok(BlockSparseSignal { x, support });
    }
    Err(VspError::Infeasible(format!(
        "no feasible block layout for N={n}, K={k}, L={l} after {MAX_REDRAWS} draws"
    )))
}
