//! Facial expression recognition toolkit: HOG descriptors, sparse stacked
//! autoencoders, PCA and one-vs-all kernel SVMs, with an experiment harness.

pub mod autoencoder;
pub mod error;
pub mod hog;
pub mod imageio;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod svm;

pub use error::{Error, Result};
