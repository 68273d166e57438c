//! Pseudo-label refinement and EMA self-training for domain-generalized
//! semantic segmentation, at desk scale.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod maskops;
pub mod metrics;
pub mod model;
pub mod pnm;
pub mod refine;
pub mod rng;
pub mod scenegen;
pub mod segmenter;
pub mod trainer;
pub mod types;

pub use config::TrainConfig;
pub use rng::RngStream;
pub use types::{ClassCatalog, ClassId, ImageBuf, LabelMap, UNLABELED};
