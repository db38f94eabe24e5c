//! Conditional (non-global) Ulam matrices over a seeded patch.
//!
//! A window starting at analysis time `t` seeds the patch bins, advects a
//! lattice of test points in each bin over one step, records where they land,
//! and repeats `n` times from the set of bins hit. The step matrices compose
//! into one transition matrix whose leading singular triples describe the
//! window.

mod matrix;
mod svd;
mod window;

use thiserror::Error;

use crate::flow::FlowError;
use crate::geometry::GeometryError;

pub use matrix::{compose, lift, SupportVector, TransitionMatrix};
pub use svd::{residuals, truncated_svd, truncated_svd_with, SvdMethod, SvdTriples, DENSE_FALLBACK_DIM};
pub use window::{build_window, ModeWindow, UlamBuilder, WindowModes, WindowOperators};

#[derive(Debug, Error)]
pub enum UlamError {
    #[error("patch covers no bin centres")]
    EmptyPatch,
    #[error("every test point escaped the domain in window t={t}, step {step}")]
    TotalEscape { t: i64, step: usize },
    #[error("consecutive matrices have mismatched bin index sets")]
    IndexMismatch,
    #[error("cannot compose an empty chain")]
    EmptyChain,
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("dense SVD failed to converge")]
    SvdFailed,
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
