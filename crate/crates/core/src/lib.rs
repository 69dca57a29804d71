//! Hierarchically blocked one-sided Jacobi SVD and hyperbolic SVD.
//!
//! The crate is organized bottom-up:
//!
//! - [`strategy`]: cyclic and perfectly parallel pivot strategies;
//! - [`rotation`]: guarded trigonometric and hyperbolic rotations;
//! - [`norm`]: overflow-proof sums of squares;
//! - [`kernel`]: one block-pair task (shortening, inner Jacobi, update);
//! - [`driver`]: the single-node blocked solver;
//! - [`distsim`]: a multi-worker simulation of the outer level;
//! - [`testgen`]: test factors with prescribed spectra;
//! - [`io`]: matrix files.

pub mod dd;
pub mod distsim;
pub mod driver;
pub mod io;
pub mod kernel;
pub mod matrix;
pub mod norm;
pub mod rotation;
pub mod strategy;
pub mod testgen;

pub use matrix::{ColumnMatrix, Signature};
