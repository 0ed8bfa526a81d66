//! Trajectory scenes for travel-mode identification.
//!
//! A GPS segment is turned into two views: a rendered map scene (the
//! trajectory over roads, subway lines and bus stations) and a structured
//! narrative of its temporal and kinematic features. Each view is embedded
//! into a unit vector, the two vectors are combined, and a small MLP
//! classifies the segment as walk, bike, bus, car or subway.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`trajectory`]: data model and GeoLife PLT / labels parsers
//! - [`preprocess`]: cleaning and label-driven segmentation
//! - [`kinematics`]: temporal and dynamics features
//! - [`scene`]: OSM ingestion, layer extraction and rendering
//! - [`narrative`]: the textual modality and the reasoner prompt
//! - [`embedding`]: offline and remote embedders, combination rules
//! - [`classifier`]: MLP, training, metrics and the ablation grid
//! - [`pipeline`]: file-based stages, config and run manifests
//! - [`synth`]: a synthetic labeled corpus with a matching OSM extract

pub mod classifier;
pub mod embedding;
pub mod geo;
pub mod kinematics;
pub mod narrative;
pub mod pipeline;
pub mod preprocess;
pub mod remote;
pub mod scene;
pub mod synth;
pub mod trajectory;
