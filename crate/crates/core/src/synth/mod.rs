//! Synthetic stand-in for captured human-scene data: box-furniture rooms,
//! ground-truth body placements and augmented training samples.

mod dataset;
mod place;
mod sample;
mod scene;

pub use dataset::{
    build_dataset, load_dataset, read_dataset, save_dataset, write_dataset, Dataset, DatasetConfig,
    TEST_SCENE_OFFSET,
};
pub use place::{place_body, validate_placement, CONTACT_TOLERANCE, MAX_PLACEMENT_COLLISION};
pub use sample::{
    extract_sample, extract_sample_with, Augmentation, CageConfig, Split, TrainSample,
};
pub use scene::{generate_scene, Furniture, FurnitureKind, SceneParams, Support, SynthScene};
