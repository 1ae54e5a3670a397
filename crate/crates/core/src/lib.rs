//! Local-surjection solvers, Clarke subdifferential oracles and
//! counterexample certificates for matrix factorization, factorization
//! machines and CP tensor factorization.

pub mod certify;
pub mod dense;
pub mod error;
pub mod fmdata;
pub mod maps;
pub mod preimage;
pub mod rng;
pub mod subdiff;

pub use error::{Error, Result};
