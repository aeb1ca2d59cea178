//! Deterministic synthetic retail scenes: dense grids of category-colored
//! products, a rendered head with a gaze tick, per-product boxes, and a
//! gaze-point annotation, plus dataset serialization.

pub mod dataset;
pub mod raster;
pub mod scene;
pub mod tensor;

pub use dataset::{digest_dataset, read_dataset, write_dataset, Dataset, DataError};
pub use scene::{generate_sample, Sample, SceneSpec};
