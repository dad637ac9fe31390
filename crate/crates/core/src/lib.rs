//! Factorized transducer decoding with class-based language models.
//!
//! The crate scores transducer emissions as the sum of an encoder logit and a
//! vocabulary-predictor log-probability, and extends the output space with a
//! name class whose tokens are constrained by a prefix trie over a name list.

pub mod decoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod lattice;
pub mod name_trie;
pub mod scoring;
pub mod toygen;
pub mod vocab;

pub use error::{Error, Result};
