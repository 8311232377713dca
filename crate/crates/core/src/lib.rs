//! Locally linear embedding toolkit.
//!
//! Points are stored column-wise (`d x n`), embeddings row-wise (`n x p`).
//! Everything is deterministic for a fixed input and seed.

pub mod dataset;
pub mod error;
pub mod fusion;
pub mod kernel_lle;
pub mod lle_core;
pub mod model_select;
pub mod neighbors;
pub mod numlin;
pub mod oos;
pub mod robust;
pub mod scalable;
pub mod supervised;
pub mod weighted_variants;

pub use error::{LleError, Result};
pub use nalgebra::{DMatrix, DVector};
