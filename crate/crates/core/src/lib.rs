//! Aspect-structured autoencoding topic model for review corpora.
//!
//! Sentences are assigned to one of `A` aspects through a Concrete
//! relaxation, each aspect carries `K` sub-aspect topics whose proportions
//! are inferred from the reviewing user's and the reviewed item's history,
//! and the same latent structure drives a biased rating predictor.

pub mod checkpoint;
pub mod cli;
pub mod concrete;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod synthetic;
pub mod text;
pub mod training;

pub use error::{Error, Result};
