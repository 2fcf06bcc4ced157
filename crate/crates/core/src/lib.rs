pub mod brhpo;
pub mod envs;
pub mod error;
pub mod harness;
pub mod netopt;
pub mod oracle;
pub mod rng;
pub mod sac;

pub use error::{Error, Result};
