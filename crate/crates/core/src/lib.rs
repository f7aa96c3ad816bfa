//! Loschmidt-echo simulations of a noisy XYZ spin ring.
//!
//! A cat state `(|↑…↑⟩ + |↓…↓⟩)/√2` is evolved under the chain interaction
//! plus a classical Lorentzian-correlated field coupled to `M_z`; reversing
//! the interaction at `τ₀` refocuses the internal dynamics. The crate compares
//! the resulting coherence with the noninteracting (pure dephasing) case and
//! with the Anderson–Weiss closed form.

// negated comparisons are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod coherence;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod noise;
pub mod parallel;
pub mod sector;
pub mod spinchain;
pub mod stats;

pub use error::{Error, Result};
pub use parallel::Execution;
