//! Quadratic measurements regression.
//!
//! Recover `x*` from `bᵢ = ⟨x*, Aᵢx*⟩ + εᵢ` with symmetric `Aᵢ` by minimizing
//! `f(x) = (1/4n) Σ (⟨x, Aᵢx⟩ − bᵢ)²`. The crate generates random instances
//! ([`ensembles`]), evaluates the objective and its derivatives
//! ([`objective`]), solves with a two-phase gradient regularized Newton method
//! ([`grnm`]) or a Wirtinger-flow baseline ([`wf`]), scores recoveries up to
//! global phase ([`metrics`]) and runs seeded experiment grids ([`harness`]).

pub mod diagnostics;
pub mod ensembles;
pub mod error;
pub mod grnm;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod plot;
pub mod seed;
pub mod wf;

pub use error::{QmrError, Result};
