//! Binary Statistical Image Features.
//!
//! Each pixel is described by the signs of its responses to n zero-mean
//! filters; the resulting n-bit codes are histogrammed into a 2^n-bin
//! texture descriptor. Every native filter size is applied to the image and
//! to its half-resolution copy, so 8 native sizes yield 16 feature sets.

mod code;
mod features;
mod filters;

pub use code::{compute_code_map, CodeMap};
pub use features::{
    extract_all, extract_all_counts, histogram, histogram_counts, FeatureVector, FilterSet, Resolution, ScaleId,
};
pub use filters::{
    filter_file_name, filter_file_path, is_valid_combination, load_filter_bank,
    synthesize_filter_bank, FilterBank, DEFAULT_BITS, MAX_BITS, MIN_BITS, NATIVE_SIZES,
};
