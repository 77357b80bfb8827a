//! Hybrid book recommendation for sparse purchase logs.
//!
//! Customers are profiled by the topics of the titles they bought, the
//! embedding of book types, and demographics. Profile similarity is blended
//! with latent-factor correlations to rank unseen books.

pub mod embeddings;
pub mod evaluation;
pub mod hybrid;
pub mod ingest;
pub mod lfm;
pub mod matrix;
pub mod pipeline;
pub mod preference;
pub mod registry;
pub mod rng;
pub mod similarity;
pub mod topic_model;

pub use matrix::Matrix;
pub use registry::Registry;
