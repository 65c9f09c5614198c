//! Optimal lossy encodings of quantum data that keep predictive information.
//!
//! Given an initial state `rho_X` and a relevance channel `R^{R->Y}` acting on
//! the purification reference, this crate finds encodings `X -> M` that
//! maximize the mutual information I[M:Y] at a constrained I[M:R], traces the
//! optimal quantum and classical-memory curves in the information plane, and
//! quantifies the quantum advantage between them.
//!
//! Layout:
//! - [`linalg`]: dense complex matrices, partial trace/transpose, Hermitian
//!   eigendecomposition, spectral functions.
//! - [`quantum`]: validated states, CPTP channels in Kraus and
//!   conditional-operator (Choi) form, purification.
//! - [`info`]: entropies, mutual information, concurrence, discord, bounds.
//! - [`solver`]: the self-consistent fixed-point iteration for optimal
//!   encodings with quantum or classical memory.
//! - [`classical`]: fully classical information-bottleneck reference solver.
//! - [`anneal`]: deterministic annealing driver and information-plane traces.
//! - [`problems`]: bundled example problems and JSON loading.
//! - [`schema`]: JSON wire formats shared with the CLI.

pub mod anneal;
pub mod classical;
pub mod error;
pub mod info;
pub mod linalg;
pub mod problems;
pub mod quantum;
pub mod schema;
pub mod solver;

pub use error::{QibError, Result};
