//! Type IV q-binomial distribution of order `k`.
//!
//! `E_{n,k}` counts the success runs of length exactly `k` (delimited by
//! failures or by the ends of the sequence) in `n` binary trials whose success
//! probability after `i` failures is `theta * q^i`.

pub mod bq;
pub mod dist;
pub mod error;
pub mod infer;
pub mod mc;
pub mod meanvar;
pub mod moments;
pub mod oracle;
pub mod qcalculus;
pub mod sim;

pub use dist::{Method, Pmf, RunSpec};
pub use error::{Error, Result};
pub use qcalculus::{ModelParams, QReal};
