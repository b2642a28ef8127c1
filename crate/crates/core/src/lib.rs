//! Textured contact lens presentation attack detection for NIR iris images.
//!
//! Images are described by BSIF histograms at 16 scales, one RBF-kernel SVM
//! is trained per scale, and the strongest models vote on the final label.

pub mod bsif;
pub mod cli;
pub mod ensemble;
pub mod svm;
pub mod error;
pub mod fsutil;
pub mod imgio;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
