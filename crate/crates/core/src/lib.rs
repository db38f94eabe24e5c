//! Localised transfer-operator analysis of time-dependent planar flows.
//!
//! The pipeline seeds a patch of a uniform grid, builds rolling windows of
//! conditional Ulam matrices by advecting lattice test points, tracks the
//! leading singular modes from window to window, and extracts lifespans of
//! coherent structures from the equivariance mismatch of the tracked modes.
//!
//! Modules, in pipeline order:
//!
//! - [`geometry`]: grids, patches and seeding lattices
//! - [`fields`]: analytic and gridded velocity fields
//! - [`flow`]: RK4 advection
//! - [`ulam`]: conditional Ulam matrices, compositions and truncated SVDs
//! - [`tracking`]: mode pairing across windows and quasi-norm selection
//! - [`lifespans`]: mismatch, lifespan detection and characteristic spans
//! - [`regularity`]: the isoperimetric regularity layer
//! - [`cli`]: configuration-driven orchestration and file outputs

pub mod cli;
pub mod fields;
pub mod flow;
pub mod geometry;
pub mod lifespans;
pub mod regularity;
pub mod tracking;
pub mod ulam;

pub use geometry::{Domain, Grid, Patch, Vec2};
