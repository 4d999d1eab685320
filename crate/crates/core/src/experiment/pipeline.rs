//! Per-utterance stages shared by every protocol: anonymization, VAD,
//! features, embeddings, and trial scoring.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::ClassifierConfig;
use super::manifest::{Corpus, DatasetManifest};
use super::trials::{Trial, TrialConfig};
use super::ExperimentError;
use crate::anonymize::{AnonymizerSpec, Provenance};
use crate::audio_io::AudioClip;
use crate::dsp::{compute_log_mel, zero_phase_filter, FeatureConfig, IirFilter};
use crate::embedding::{cosine_score, embed_utterance, enroll_speaker, SpeakerEmbedding};
use crate::metrics::{TrialScoreSet, TrialTags};
use crate::vad::{apply_vad, VadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub trials: TrialConfig,
    pub vad: VadConfig,
    pub classifier: ClassifierConfig,
    /// Worker threads; `None` uses the global pool. Results never depend on it.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            trials: TrialConfig::default(),
            vad: VadConfig::default(),
            classifier: ClassifierConfig::default(),
            jobs: None,
        }
    }
}

impl EvalOptions {
    pub fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, ExperimentError> {
        match self.jobs {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| ExperimentError::InvalidArgument(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Where speaker embeddings come from.
#[derive(Debug, Clone, Default)]
pub enum EmbeddingBackend {
    /// Mean/std pooling of ASV-preset log-Mel features after VAD.
    #[default]
    Reference,
    /// Externally computed embeddings keyed by utterance id. `anonymized` may
    /// be omitted only for the identity anonymizer.
    Precomputed {
        original: HashMap<String, SpeakerEmbedding>,
        anonymized: Option<HashMap<String, SpeakerEmbedding>>,
    },
}

/// Anonymizes every utterance of the corpus, keeping each clip's provenance;
/// draws are keyed by speaker so the result does not depend on scheduling.
pub fn anonymize_with_provenance(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    seed: u64,
    stream: &str,
) -> Result<Vec<(AudioClip, Provenance)>, ExperimentError> {
    spec.validate()?;
    corpus
        .manifest
        .utterances
        .par_iter()
        .zip(corpus.audio.par_iter())
        .map(|(u, clip)| spec.apply(clip, seed, &u.speaker_id, stream).map_err(ExperimentError::from))
        .collect()
}

pub fn anonymize_corpus(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    seed: u64,
    stream: &str,
) -> Result<Vec<AudioClip>, ExperimentError> {
    Ok(anonymize_with_provenance(corpus, spec, seed, stream)?
        .into_iter()
        .map(|(c, _)| c)
        .collect())
}

pub fn asv_embedding(clip: &AudioClip, speaker_id: &str, vad: &VadConfig) -> Result<SpeakerEmbedding, ExperimentError> {
    let voiced = apply_vad(clip, vad)?;
    let mel = compute_log_mel(&voiced, &FeatureConfig::asv(clip.sample_rate))?;
    Ok(embed_utterance(&mel, speaker_id)?)
}

/// Classifier input: drift removal, VAD, 80-band log-Mel, then per-band mean
/// and standard deviation (not normalized).
pub fn classifier_features(clip: &AudioClip, vad: &VadConfig) -> Result<Vec<f64>, ExperimentError> {
    let filtered = zero_phase_filter(clip, &IirFilter::drift_removal(clip.sample_rate))?;
    let voiced = apply_vad(&filtered, vad)?;
    let mel = compute_log_mel(&voiced, &FeatureConfig::classifier(clip.sample_rate))?;
    let n = mel.frames.len() as f64;
    if mel.frames.len() < 2 {
        return Err(ExperimentError::InvalidArgument(format!(
            "utterance {:?} too short for classifier features",
            clip.source_id
        )));
    }
    let bands = mel.n_mels();
    let mut mean = vec![0.0; bands];
    let mut sq = vec![0.0; bands];
    for f in &mel.frames {
        for k in 0..bands {
            mean[k] += f[k] / n;
        }
    }
    for f in &mel.frames {
        for k in 0..bands {
            sq[k] += (f[k] - mean[k]).powi(2) / n;
        }
    }
    mean.extend(sq.into_iter().map(f64::sqrt));
    Ok(mean)
}

pub fn embed_all(
    manifest: &DatasetManifest,
    audio: &[AudioClip],
    vad: &VadConfig,
) -> Result<Vec<SpeakerEmbedding>, ExperimentError> {
    manifest
        .utterances
        .par_iter()
        .zip(audio.par_iter())
        .map(|(u, clip)| {
            let mut e = asv_embedding(clip, &u.speaker_id, vad)?;
            e.utterance_id = Some(u.utterance_id.clone());
            Ok(e)
        })
        .collect()
}

pub fn features_all(audio: &[AudioClip], vad: &VadConfig) -> Result<Vec<Vec<f64>>, ExperimentError> {
    audio.par_iter().map(|c| classifier_features(c, vad)).collect()
}

pub(crate) fn lookup_embeddings(
    manifest: &DatasetManifest,
    table: &HashMap<String, SpeakerEmbedding>,
) -> Result<Vec<SpeakerEmbedding>, ExperimentError> {
    manifest
        .utterances
        .iter()
        .map(|u| {
            let e = table.get(&u.utterance_id).ok_or_else(|| {
                ExperimentError::Manifest(format!("no embedding for utterance {:?}", u.utterance_id))
            })?;
            if e.speaker_id != u.speaker_id {
                return Err(ExperimentError::Manifest(format!(
                    "embedding for {:?} names speaker {:?}, manifest says {:?}",
                    u.utterance_id, e.speaker_id, u.speaker_id
                )));
            }
            Ok(e.clone())
        })
        .collect()
}

pub fn tags_for(manifest: &DatasetManifest, speaker_id: &str) -> TrialTags {
    manifest
        .speaker(speaker_id)
        .map(|s| TrialTags {
            gender: Some(s.gender.to_string()),
            age_group: Some(s.age_group.to_string()),
            disorder: Some(s.label.to_string()),
        })
        .unwrap_or_default()
}

/// Utterance indices per speaker, restricted to `keep`.
pub fn utterance_groups(
    manifest: &DatasetManifest,
    keep: impl Fn(&str) -> bool,
) -> BTreeMap<String, Vec<usize>> {
    manifest
        .utterances_by_speaker()
        .into_iter()
        .filter(|(s, _)| keep(s))
        .map(|(s, v)| (s.to_string(), v))
        .collect()
}

/// Scores trials: enrollment centroid from `enroll` embeddings of the claimed
/// speaker (excluding the test utterance), against the `test` embedding.
/// Tags come from the claimed speaker.
pub fn score_trials(
    manifest: &DatasetManifest,
    trials: &[Trial],
    groups: &BTreeMap<String, Vec<usize>>,
    enroll: &[SpeakerEmbedding],
    test: &[SpeakerEmbedding],
) -> Result<TrialScoreSet, ExperimentError> {
    let scored: Vec<(f64, bool, TrialTags)> = trials
        .par_iter()
        .map(|t| {
            let members: Vec<SpeakerEmbedding> = groups[&t.enroll_speaker]
                .iter()
                .filter(|&&i| i != t.test_utterance)
                .map(|&i| enroll[i].clone())
                .collect();
            let model = enroll_speaker(&members)?;
            let s = cosine_score(&model, &test[t.test_utterance])?;
            Ok((s, t.label, tags_for(manifest, &t.enroll_speaker)))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut set = TrialScoreSet::default();
    for (s, l, tags) in scored {
        set.push(s, l, Some(tags));
    }
    Ok(set)
}

/// CSV with header `utterance_id,speaker_id,f1..fD`, one row per utterance.
pub fn write_feature_table(
    manifest: &DatasetManifest,
    features: &[Vec<f64>],
    out: impl std::io::Write,
) -> Result<(), ExperimentError> {
    if features.len() != manifest.utterances.len() {
        return Err(ExperimentError::InvalidArgument(format!(
            "{} feature rows for {} utterances",
            features.len(),
            manifest.utterances.len()
        )));
    }
    let dim = features.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["utterance_id".to_string(), "speaker_id".to_string()];
    header.extend((1..=dim).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (u, f) in manifest.utterances.iter().zip(features) {
        let mut row = vec![u.utterance_id.clone(), u.speaker_id.clone()];
        row.extend(f.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
