//! Dense operators on named tensor factors: products, partial traces,
//! inner products and spectra.

pub mod eigen;
mod matrix;
mod operator;

pub use matrix::{Matrix, C64};
pub(crate) use matrix::{ONE, ZERO};
pub use operator::{Field, Operator, SystemLabel, HERMITIAN_TOL};

use crate::error::Result;

/// Kronecker product with concatenated system lists.
pub fn tensor(a: &Operator, b: &Operator) -> Result<Operator> {
    a.tensor(b)
}

/// Traces out the named systems.
pub fn partial_trace(op: &Operator, traced: &[&str]) -> Result<Operator> {
    op.partial_trace(traced)
}

/// `Tr(a† b)`.
pub fn hs_inner(a: &Operator, b: &Operator) -> Result<C64> {
    a.hs_inner(b)
}

/// Smallest eigenvalue of the Hermitian part of `op`.
pub fn min_eigenvalue(op: &Operator) -> Result<f64> {
    op.min_eigenvalue()
}
