//! Small dense networks, the Adam optimizer and a finite-difference checker.

pub mod adam;
pub mod gradcheck;
pub mod mlp;

pub use adam::{clip_grad_norm, AdamState};
pub use gradcheck::{grad_check, grad_check_with, relative_error};
pub use mlp::{Cache, Mlp, MlpCheckpoint};
