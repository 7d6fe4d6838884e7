//! Multitask question answering network.
//!
//! Every task is posed as a (context, question, answer) triple. The encoder
//! builds coattended, self-attended representations of context and question;
//! the multi-pointer-generator decoder mixes a pointer over the context, a
//! pointer over the question and a generative vocabulary through two learned
//! switches.

pub mod check;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
