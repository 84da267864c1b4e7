//! Process matrices under symmetry restrictions: ordinary quantum theory,
//! finite-group twirled worlds and real quantum theory.
//!
//! The crate covers the operator algebra on named tensor factors, Pauli
//! decompositions, Choi-operator machinery, process validity and the Born
//! rule, group twirling, an SDP see-saw search and certificate verification.

// Links the system OpenBLAS used by the conic solver's PSD cone.
extern crate openblas_src;

pub mod certify;
pub mod channels;
pub mod error;
pub mod operator_algebra;
pub mod optimize;
pub mod pauli;
pub mod process;
pub mod twirl;

pub use error::{Error, Result};
