//! Continual learning for retrieval-style conversational agents.
//!
//! The crate is `no_std` and needs only `alloc`. It contains:
//!
//! - [`tensor`]: a small define-by-run reverse-mode autodiff engine over `f64`,
//! - [`layers`]: LSTM cells, embedding tables, dropout and initializers,
//! - [`encoder`]: the character → word → utterance → dialog-state hierarchy,
//! - [`ranker`]: bilinear state/action scoring with Plackett-Luce normalization,
//! - [`consolidation`]: the surrogate-loss regularizer with adaptive
//!   path-integral (decayed), plain path-integral and Fisher-diagonal importance,
//! - [`optim`]: Adam with global-norm clipping,
//! - [`corpus`]: synthetic dialog generators, splicing, statistics and
//!   ranking-instance construction,
//! - [`harness`]: training schemes (no transfer, weight transfer, consolidation),
//!   the few-shot sweep and evaluation.
//!
//! File formats, checkpoints and the command-line driver live in the `aewc`
//! companion crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod consolidation;
pub mod corpus;
pub mod encoder;
mod error;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod optim;
pub mod params;
pub mod ranker;
pub mod rng;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
