//! Fixed-length sentence vectors from frozen token embeddings.
//!
//! A frozen base model turns a sentence into a variable-length `K x T`
//! matrix of token embeddings. A small learned *lens* reduces that matrix
//! to a fixed `D`-dimensional vector. This crate provides the lenses
//! (mean pooling, a single affine layer with max-pooling, and a gated
//! convolutional encoder), trains them on pairwise relatedness lists, and
//! evaluates the resulting vectors with translation matching, margin-scored
//! bitext mining, binarization, linear probes and language vectors.

// index loops over matrix rows and columns read better than zipped iterators here
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod lens;
pub mod manifest;
pub mod pairs;
mod parallel;
pub mod retrieval;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod vectors;

pub use error::{Error, Result};
