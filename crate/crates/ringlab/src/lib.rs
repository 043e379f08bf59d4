//! Traceability analysis laboratory for Cryptonote-style ring-transaction
//! graphs.
//!
//! The crate models chains of ring transactions over per-denomination output
//! indices ([`chain`]), generates synthetic chains with ground truth
//! ([`chaingen`]), runs deducibility attacks ([`deduction`]), implements the
//! historical and proposed mixin-selection policies ([`sampling`]), scores
//! rings with temporal metrics ([`temporal`]), and evaluates policies by
//! Monte Carlo simulation ([`montecarlo`]).

pub mod chain;
pub mod chaingen;
pub mod deduction;
pub mod montecarlo;
pub mod sampling;
pub mod temporal;

#[doc(hidden)]
pub mod testutil;

pub use chain::{Chain, ChainError, ChainIndex, Denom, GlobalIdx, GroundTruth};
pub use sampling::{Policy, SampleError};
