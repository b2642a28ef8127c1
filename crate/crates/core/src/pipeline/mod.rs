//! Configuration, file stores and the extraction, training and testing modes.

mod config;
mod manifest;
mod modes;
mod protocols;
mod store;

pub use config::{Config, Modes, Paths, Seeds, KEYS};
pub use manifest::{Manifest, ManifestEntry};
pub use modes::{
    extraction_manifest, load_models, model_file_name, per_model_csv, run_extraction, run_testing, run_training,
    select_members, train_all, tuning_file_name, ExtractionSummary, TestingOutcome, TestingSummary, TrainingSummary,
    RANKING_FILE,
};
pub use protocols::{logo_config, run_logo_protocol, run_split_protocol, split_indices, LogoSummary, SplitSummary};
pub use store::{feature_file_name, feature_file_path, load_labeled, FeatureTable};
