//! Dataset ingestion and deterministic preprocessing.

pub mod dataset;
pub mod idx;
pub mod load;
pub mod transforms;

pub use dataset::{ImageDataset, Split};
pub use load::{load_dataset, DatasetId};
pub use transforms::{sobel, transform_dataset, transform_image, Phase, TransformSpec};
