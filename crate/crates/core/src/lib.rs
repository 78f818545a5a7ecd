//! Remote sensing image captioning with an edge-aware second image stream.
//!
//! The pipeline: [`imagecore`] derives an edge map from each image,
//! [`encoder`] turns the original and edge images into feature vectors and
//! fuses them, [`captioner`] decodes captions with an LSTM, [`search`] picks
//! the final caption (greedy, beam, or archive-guided re-ranking), and
//! [`metrics`] scores captions against references.

pub mod corpus;
pub mod captioner;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod imagecore;
pub mod metrics;
pub mod nncore;
pub mod persist;
pub mod search;

pub use error::{Error, Result};
