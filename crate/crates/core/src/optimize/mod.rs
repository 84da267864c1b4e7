//! Semidefinite programs of the see-saw search and their solvers.

mod clarabel_backend;
mod ipm;
pub mod problems;
pub mod sdp;
pub mod seesaw;

pub use problems::{build_opt_instrument, build_opt_w, InstrumentProblem, OptWProblem, Party};
pub use sdp::{solve, Backend, Diagnostics, Equality, SdpProblem, SolverResult, SolverTolerances, Status};
pub use seesaw::{evaluate, optimize_instruments, seesaw, RestartTrace, SeesawConfig, SeesawResult};
