//! Speaker anonymization and privacy/utility/fairness evaluation for
//! pathological speech corpora.

pub mod anonymize;
pub mod audio_io;
pub mod dsp;
pub mod embedding;
pub mod experiment;
pub mod metrics;
pub mod poly;
pub mod vad;

pub use audio_io::AudioClip;
