//! Matching cluster centroids of frame-level representations to
//! independently learned symbol embeddings.
//!
//! The toolkit covers the unsupervised label-discovery pipeline around a
//! frozen self-supervised model: nuisance-direction analysis and collapsing
//! of frame vectors, k-means type vectors, CBOW symbol embeddings from
//! text, entropic Gromov-Wasserstein matching between the two vector sets,
//! pseudo-label generation with reference prediction losses, and purity /
//! phone-error-rate evaluation.
//!
//! Modules follow the pipeline stages:
//!
//! - [`matrix`] / [`corpus`] / [`textio`]: data carriers and bit-exact
//!   persistence (`EMB1` matrices, label and lexicon text formats).
//! - [`subspace`]: PCA subspaces and the collapse projection.
//! - [`cluster`]: Lloyd's k-means and the random-projection baseline.
//! - [`cbow`]: full-softmax CBOW symbol embeddings.
//! - [`gw`]: the entropic Gromov-Wasserstein solver and Procrustes
//!   alignment.
//! - [`pseudolabel`]: matched labels, prediction losses, corruption.
//! - [`metrics`]: purity and PER evaluation, neighbor tables.

pub mod cbow;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod gw;
pub mod matrix;
pub mod metrics;
pub mod pseudolabel;
pub mod subspace;
pub mod textio;

pub use error::{Error, Result};
pub use matrix::{read_matrix, write_matrix, EmbeddingMatrix, RoleTag};
