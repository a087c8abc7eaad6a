//! Dense linear algebra, the MLP encoder, Adam, and least squares.
//!
//! Everything is `f64`. Matrix products go through a blocked GEMM kernel and
//! are deterministic for a fixed input.

pub mod adam;
pub mod encoder;
pub mod lstsq;
pub mod matrix;

pub use adam::{AdamConfig, AdamState};
pub use encoder::{Architecture, Dense, EncoderCache, EncoderParams};
pub use lstsq::{condition_number, ols_solve, symmetric_eigenvalues, Qr};
pub use matrix::{dot, Matrix};

/// A parameter container viewed as an ordered list of flat groups.
///
/// The same type doubles as the gradient container: a gradient must expose
/// groups of identical lengths in identical order.
pub trait ParamSet {
    fn groups(&self) -> Vec<&[f64]>;
    fn groups_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.groups().concat()
    }
}
