//! Multichannel scene simulation: a talker on a frontal grid, a directional
//! noise source, free-field propagation to a compact five-microphone array,
//! room reverberation on the speech path and SNR calibration at the front
//! microphone.

mod corpus;
mod geometry;
mod mix;
mod propagate;
mod store;
pub mod synth;

pub use corpus::{
    generate_examples, read_manifest, write_manifest, FileCorpus, ManifestRecord, Role,
    SnrSpec, SourceCorpus, Split, SyntheticCorpus,
};
pub use geometry::{
    noise_grid, sample_noise_position, sample_talker_position, talker_grid, ArrayGeometry,
    SourcePosition, NOISE_DISTANCE, NUM_MICS, SPEED_OF_SOUND, TALKER_DISTANCE,
};
pub use mix::{front_snr_db, mix_at_snr, ExampleMetadata, Mixture, MixtureExample, SceneOptions, SceneSimulator};
pub use propagate::{
    apply_rir, convolve_truncated, fractional_delay, path_to, propagate_free_field,
    PropagationOptions, RoomImpulseResponse, FRACTIONAL_DELAY_TAPS,
};
pub use store::{load_example, save_example, META_FILE};
