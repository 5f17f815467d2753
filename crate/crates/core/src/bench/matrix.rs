use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::signal::standard_complex_gaussian;
use crate::error::{Result, VspError};
use crate::linalg::matmul;
use crate::{ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    /// i.i.d. CN(0, 1).
    Scg,
    /// First M rows of `A1 A1^H`, `A1` an N x N SCG matrix.
    CroppedHermitian,
    /// `[A3 A4]`: SCG left half, right half with real and imaginary parts Exp(3).
    ConcatExpGauss,
    /// `[A5 A6]`: real entries, Exp(3) left half and Exp(1) right half.
    ConcatExp,
    /// Real standard normal entries.
    RealNormal,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 5] = [
        MatrixKind::Scg,
        MatrixKind::CroppedHermitian,
        MatrixKind::ConcatExpGauss,
        MatrixKind::ConcatExp,
        MatrixKind::RealNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Scg => "scg",
            MatrixKind::CroppedHermitian => "cropped_hermitian",
            MatrixKind::ConcatExpGauss => "concat_exp_gauss",
            MatrixKind::ConcatExp => "concat_exp",
            MatrixKind::RealNormal => "real_normal",
        }
    }

    pub fn valid_names() -> String {
        MatrixKind::ALL.map(MatrixKind::name).join(", ")
    }

    fn needs_even_n(self) -> bool {
        matches!(self, MatrixKind::ConcatExpGauss | MatrixKind::ConcatExp)
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatrixKind {
    type Err = VspError;

    fn from_str(s: &str) -> Result<Self> {
        MatrixKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                VspError::invalid(
                    "matrix_kind",
                    format!("unknown kind {s:?}; valid kinds: {}", MatrixKind::valid_names()),
                )
            })
    }
}

fn exponential(rate: f64) -> Exp<f64> {
    Exp::new(rate).expect("positive rate")
}

pub fn gen_matrix<R: Rng + ?Sized>(kind: MatrixKind, m: usize, n: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if m == 0 || m > n {
        return Err(VspError::invalid("M", format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    if kind.needs_even_n() && !n.is_multiple_of(2) {
        return Err(VspError::invalid("N", format!("{kind} needs an even N, got {n}")));
    }
    let half = n / 2;
    // Entries are drawn column by column so the stream order is fixed.
    let a = match kind {
        MatrixKind::Scg => ComplexMatrix::from_fn(m, n, |_, _| standard_complex_gaussian(rng)),
        MatrixKind::CroppedHermitian => {
            let a1 = ComplexMatrix::from_fn(n, n, |_, _| standard_complex_gaussian(rng));
            let a2 = matmul(&a1, &a1.adjoint());
            a2.rows(0, m).into_owned()
        }
        MatrixKind::ConcatExpGauss => {
            let exp3 = exponential(3.0);
            ComplexMatrix::from_fn(m, n, |_, j| {
                if j < half {
                    standard_complex_gaussian(rng)
                } else {
                    C64::new(exp3.sample(rng), exp3.sample(rng))
                }
            })
        }
        MatrixKind::ConcatExp => {
            let (exp3, exp1) = (exponential(3.0), exponential(1.0));
            ComplexMatrix::from_fn(m, n, |_, j| {
                let d = if j < half { &exp3 } else { &exp1 };
                C64::new(d.sample(rng), 0.0)
            })
        }
        MatrixKind::RealNormal => ComplexMatrix::from_fn(m, n, |_, _| C64::new(StandardNormal.sample(rng), 0.0)),
    };
    Ok(a)
}
