//! Safe sequential learning with Gaussian processes, with transfer from
//! source tasks through multi-output kernels.

pub mod datasets;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod safe_loop;
pub mod theory;
pub mod transfer;

pub use error::{Error, Result};
