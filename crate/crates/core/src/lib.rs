pub mod chainkit;
pub mod cryptofile;
pub mod enclave;
pub mod keys;
pub mod nodesim;
pub mod release;
pub mod stats;

pub use stats::{linear_fit, LinearFit, LinearFitF64};
