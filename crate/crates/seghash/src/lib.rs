//! Segment hashing for folk-tune generation.
//!
//! Pipeline: parse ABC tunes, slice them into overlapping 4-beat segments,
//! encode each segment as 16 binary feature timesteps, train a pair of LSTM
//! hashing networks so that composable segment pairs receive near-identical
//! K-ary codes, then generate new pieces by Hamming-distance retrieval over
//! the code index and concatenation of the retrieved segments.
//!
//! Modules follow the pipeline stages:
//!
//! - [`abc`] / [`corpus`]: notation parsing, filtering, quantization, windowing
//! - [`features`]: 29-bit timestep encoding and the segment store
//! - [`pairs`]: composable-pair mining, transition statistics, splits
//! - [`neural`]: LSTM core, prediction pretraining, exact gradients
//! - [`hashnet`]: ranking-hash heads, pair objective, training loop
//! - [`index`]: packed codes, digit-wise Hamming distance, exact retrieval
//! - [`generate`]: piece construction and ABC/MIDI rendering
//! - [`pipeline`] / [`config`]: the CLI-facing workspace commands

pub mod abc;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod generate;
pub mod hashnet;
pub mod index;
pub mod midi;
pub mod neural;
pub mod pairs;
pub mod pipeline;

pub use error::{Error, Result};
