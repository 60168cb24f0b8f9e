//! Medical concept normalization by joint learning of mention and concept
//! embeddings.
//!
//! A mention is preprocessed, encoded into a vector, and compared by cosine
//! similarity against a trainable embedding per concept. Encoder weights and
//! concept embeddings are optimized together with softmax cross-entropy.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod evaluator;
pub mod model;
pub mod optim;
pub mod preprocess;
pub mod search;
pub mod sim_head;
pub mod tensor;
pub mod trainer;
