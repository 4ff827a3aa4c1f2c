//! Datasets, configuration text and the binary model and feature formats.

mod bytes;
pub mod config;
pub mod dataset;
pub mod features;
pub mod model;

pub use config::{format_config, format_hop_config, parse_config, TrainConfig};
pub use dataset::{load_dataset, load_idx, load_pgm_dir, Dataset};
pub use features::{read_features, write_features};
pub use model::ModelFile;
