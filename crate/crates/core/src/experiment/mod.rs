//! Corpus handling, splits, trials and the evaluation protocols.

pub mod classifier;
pub mod manifest;
pub mod pipeline;
pub mod protocols;
pub mod report;
pub mod split;
pub mod synth;
pub mod trials;
pub mod utility;

use thiserror::Error;

use crate::anonymize::AnonError;
use crate::audio_io::AudioError;
use crate::dsp::DspError;
use crate::embedding::EmbeddingError;
use crate::metrics::MetricsError;
use crate::vad::VadError;

pub use classifier::{train_reference_classifier, ClassifierConfig, ReferenceClassifier};
pub use manifest::{load_manifest, AgeGroup, Corpus, DatasetManifest, Gender, Label, SpeakerRecord, UtteranceRecord};
pub use pipeline::{anonymize_corpus, EmbeddingBackend, EvalOptions};
pub use protocols::{
    run_fairness_eval, run_inversion_attack, run_pooled_eval, run_privacy_eval, run_sweep, run_task_utility,
    FairnessReport, InversionReport, PooledReport, PrivacyReport, SweepReport, SweepRow,
};
pub use report::{config_hash, emit_report, render_report, CsvTable, Report, ReportFormat};
pub use split::{make_split, SplitPlan, Task};
pub use synth::{synth_corpus, SynthConfig};
pub use trials::{generate_trials, Trial, TrialConfig};
pub use utility::{run_utility_eval, run_utility_task, SubgroupUtility, UtilityReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("insufficient speakers: {0}")]
    InsufficientSpeakers(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no positive trials in the test set")]
    EmptyTestSet,
    #[error("single class: {0}")]
    SingleClass(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Vad(#[from] VadError),
    #[error(transparent)]
    Anon(#[from] AnonError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ExperimentError {
    /// True when the failure comes from malformed or unusable input data
    /// rather than from a numeric or runtime problem.
    pub fn is_data_error(&self) -> bool {
        match self {
            Self::Manifest(_)
            | Self::InsufficientSpeakers(_)
            | Self::EmptyTestSet
            | Self::SingleClass(_)
            | Self::Io(_)
            | Self::Csv(_)
            | Self::Json(_)
            | Self::Audio(_) => true,
            Self::Embedding(e) => !matches!(e, EmbeddingError::Degenerate(_)),
            _ => false,
        }
    }
}
