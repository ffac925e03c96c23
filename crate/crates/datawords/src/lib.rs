//! Single-use register machines over data words.
//!
//! Letters are drawn from polynomial orbit-finite alphabets built from an
//! infinite set of atoms. The crate provides interpreters for two-way and
//! one-way single-use transducers, single-use Mealy machines, streaming
//! string transducers with atoms and regular list functions with atoms,
//! together with the constructions relating them.

pub mod atoms;
pub mod equiv;
pub mod error;
pub mod library;
pub mod machines;
pub mod monoid;
pub mod primes;
pub mod reglist;
pub mod sst;

pub use error::{Error, Result};
