//! Multi-sense word embeddings where every word is a mixture of diagonal
//! Gaussians.
//!
//! Training minimizes a max-margin loss whose energy is the negative of an
//! approximate KL divergence between mixtures. The approximation is the mean
//! of a product-of-Gaussians / variational upper bound and the matching lower
//! bound, both of which are available on their own in [`mixture`].
//!
//! Layout:
//!
//! - [`gauss`]: closed-form quantities for single diagonal Gaussians.
//! - [`mixture`]: mixture embeddings, KL bounds and a Monte-Carlo reference.
//! - [`objective`]: the hinge loss over (word, context, negative) triples and
//!   its exact gradient.
//! - [`corpus`]: Text8 ingestion, vocabulary, subsampling, pairs, negatives.
//! - [`trainer`]: parameter bank, Adagrad, the training loop and the model file.
//! - [`eval`]: similarity metrics, Spearman, entailment sweeps, neighbors.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod gauss;
pub mod mixture;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
pub use gauss::DiagGaussian;
pub use mixture::MixtureEmbedding;
