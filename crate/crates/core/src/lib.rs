pub mod bench;
pub mod elbo;
pub mod error;
pub mod gd;
pub mod linalg;
pub mod model;
pub mod mrf;
pub mod posterior;
pub mod vsp;

pub use error::{Result, VspError};
pub use model::{BeliefState, GammaParams, MrfParams, SolverKind, Topology, VspConfig};
pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type ComplexMatrix = nalgebra::DMatrix<C64>;
pub type ComplexVector = nalgebra::DVector<C64>;
pub type RealVector = nalgebra::DVector<f64>;
