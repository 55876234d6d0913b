//! Link-level NOMA simulator with PDD-aided channel estimation.
//!
//! The crate covers the whole receive chain used by the experiments:
//! Rayleigh/Gauss–Markov channel traces ([`channel`]), superposition coding
//! and successive interference cancellation with explicit partially decoded
//! data residuals ([`noma_link`]), pilot-based and PDD-corrected channel
//! estimation ([`estimation`]), a small hand-differentiated transformer
//! ([`transformer`]), a two-cell handover simulator ([`handover`]) and the
//! metrics and analytical bound checks ([`metrics`]). [`pipeline`] wires the
//! receive chain together, [`theory`] feeds its measurements to the bound
//! evaluators and [`complexity`] reads the transformer's FLOP counters.

// Validation rejects NaN through negated comparisons, and the dense linear
// algebra indexes by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod complexity;
pub mod estimation;
pub mod handover;
pub mod metrics;
pub mod noma_link;
pub mod numerics;
pub mod pipeline;
pub mod theory;
pub mod transformer;

pub use numerics::{Complex64, ComplexMatrix, ComplexVector, SeededRng};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
