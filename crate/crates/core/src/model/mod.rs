//! FT-JNF mask estimator, its size presets and the model file format.

mod config;
mod container;
pub(crate) mod linalg;
mod lstm;
mod network;
mod real;

pub use config::{count_macs_per_frame, count_params, ModelConfig, PublishedSize, SizePreset};
pub use container::{load_model, load_model_expecting, save_model, SavedModel, FORMAT_VERSION};
pub use lstm::Lstm;
pub use network::{
    apply_mask, defeaturize, featurize, ComplexMask, Features, ForwardCache, FtJnf, FtJnfModel,
    IntermediateTaps, TapGrads,
};
pub use real::Real;
