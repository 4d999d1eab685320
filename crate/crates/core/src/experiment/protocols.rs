use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Corpus, Label};
use super::pipeline::{
    anonymize_corpus, embed_all, features_all, lookup_embeddings, score_trials, utterance_groups, EmbeddingBackend,
    EvalOptions,
};
use super::split::{make_split, Task};
use super::trials::generate_trials;
use super::utility::{run_utility_task, slice_auroc, utility_data, UtilityReport};
use super::ExperimentError;
use crate::anonymize::{AnonymizerSpec, McAdamsConfig};
use crate::embedding::SpeakerEmbedding;
use crate::metrics::{compute_eer, pearson_r, EerResult, PearsonResult, TrialScoreSet, TrialTags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEer {
    pub dimension: String,
    pub group: String,
    pub n_trials: usize,
    /// `None` when the subgroup's trials hold a single class.
    pub eer_original: Option<f64>,
    pub eer_anonymized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub method: String,
    pub n_speakers: usize,
    pub n_trials: usize,
    pub original: EerResult,
    pub anonymized: EerResult,
    pub subgroups: Vec<SubgroupEer>,
}

type TagGetter = fn(&TrialTags) -> Option<&str>;

const EER_DIMENSIONS: [(&str, TagGetter); 3] = [
    ("gender", |t| t.gender.as_deref()),
    ("age_group", |t| t.age_group.as_deref()),
    ("disorder", |t| t.disorder.as_deref()),
];

fn subgroup_eers(original: &TrialScoreSet, anonymized: &TrialScoreSet) -> Vec<SubgroupEer> {
    let mut out = Vec::new();
    for (dim, get) in EER_DIMENSIONS {
        let groups: BTreeSet<&str> = original.tags.iter().filter_map(get).collect();
        for g in groups {
            let a = original.filter_tags(|t| get(t) == Some(g));
            let b = anonymized.filter_tags(|t| get(t) == Some(g));
            out.push(SubgroupEer {
                dimension: dim.into(),
                group: g.into(),
                n_trials: a.len(),
                eer_original: compute_eer(&a).ok().map(|e| e.eer_percent),
                eer_anonymized: compute_eer(&b).ok().map(|e| e.eer_percent),
            });
        }
    }
    out
}

/// Original-audio embeddings plus anonymized ones for the given spec/stream.
fn backend_embeddings(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    backend: &EmbeddingBackend,
    seed: u64,
    opts: &EvalOptions,
    stream: &str,
) -> Result<(Vec<SpeakerEmbedding>, Vec<SpeakerEmbedding>), ExperimentError> {
    match backend {
        EmbeddingBackend::Reference => {
            let original = embed_all(&corpus.manifest, &corpus.audio, &opts.vad)?;
            let anonymized = if *spec == AnonymizerSpec::Identity {
                original.clone()
            } else {
                let audio = anonymize_corpus(corpus, spec, seed, stream)?;
                embed_all(&corpus.manifest, &audio, &opts.vad)?
            };
            Ok((original, anonymized))
        }
        EmbeddingBackend::Precomputed { original, anonymized } => {
            let orig = lookup_embeddings(&corpus.manifest, original)?;
            let anon = match (anonymized, spec) {
                (Some(a), _) => lookup_embeddings(&corpus.manifest, a)?,
                (None, AnonymizerSpec::Identity) => orig.clone(),
                (None, _) => {
                    return Err(ExperimentError::InvalidArgument(
                        "precomputed backend needs anonymized embeddings for this anonymizer".into(),
                    ))
                }
            };
            Ok((orig, anon))
        }
    }
}

fn privacy_from_embeddings(
    corpus: &Corpus,
    speakers: &BTreeSet<String>,
    spec: &AnonymizerSpec,
    original: &[SpeakerEmbedding],
    anonymized: &[SpeakerEmbedding],
    seed: u64,
    opts: &EvalOptions,
) -> Result<PrivacyReport, ExperimentError> {
    if speakers.is_empty() {
        return Err(ExperimentError::EmptyTestSet);
    }
    let groups = utterance_groups(&corpus.manifest, |s| speakers.contains(s));
    let trials = generate_trials(&groups, seed, &opts.trials)?;
    if !trials.iter().any(|t| t.label) {
        return Err(ExperimentError::EmptyTestSet);
    }
    let orig = score_trials(&corpus.manifest, &trials, &groups, original, original)?;
    let anon = score_trials(&corpus.manifest, &trials, &groups, original, anonymized)?;
    Ok(PrivacyReport {
        method: spec.name().into(),
        n_speakers: groups.len(),
        n_trials: trials.len(),
        original: compute_eer(&orig)?,
        anonymized: compute_eer(&anon)?,
        subgroups: subgroup_eers(&orig, &anon),
    })
}

/// EER with enrollment on original audio and test utterances anonymized, plus
/// the same trials on original audio, over `speakers`.
pub fn run_privacy_eval_on(
    corpus: &Corpus,
    speakers: &BTreeSet<String>,
    spec: &AnonymizerSpec,
    backend: &EmbeddingBackend,
    seed: u64,
    opts: &EvalOptions,
) -> Result<PrivacyReport, ExperimentError> {
    opts.run(|| {
        let (original, anonymized) = backend_embeddings(corpus, spec, backend, seed, opts, "test")?;
        privacy_from_embeddings(corpus, speakers, spec, &original, &anonymized, seed, opts)
    })?
}

/// Privacy evaluation over every speaker of the corpus.
pub fn run_privacy_eval(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    backend: &EmbeddingBackend,
    seed: u64,
    opts: &EvalOptions,
) -> Result<PrivacyReport, ExperimentError> {
    let all = corpus.manifest.speakers.iter().map(|s| s.speaker_id.clone()).collect();
    run_privacy_eval_on(corpus, &all, spec, backend, seed, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub eer_percent: f64,
    pub auroc: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub subgroup_eer: BTreeMap<String, Option<f64>>,
    pub disorder_auroc: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub toolkit_version: String,
    pub n_trials: usize,
    pub train_speakers: usize,
    pub test_speakers: usize,
    /// EER of the same trials on original audio.
    pub baseline_eer: f64,
    pub rows: Vec<SweepRow>,
    /// Correlation between the EER and AUROC columns (needs 3+ rows).
    pub eer_auroc_correlation: Option<PearsonResult>,
}

/// Fixed-alpha McAdams sweep. Every row shares one speaker split and one trial
/// list; only the audio differs.
pub fn run_sweep(
    corpus: &Corpus,
    alphas: &[f64],
    base: &McAdamsConfig,
    seed: u64,
    opts: &EvalOptions,
) -> Result<SweepReport, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::InvalidArgument("empty alpha list".into()));
    }
    for &a in alphas {
        McAdamsConfig::check_alpha(a)?;
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::InvalidArgument("alphas must be strictly increasing".into()));
    }
    base.validate()?;
    opts.run(|| {
        let manifest = &corpus.manifest;
        let split = make_split(manifest, Task::Pooled, seed)?;
        let groups = utterance_groups(manifest, |_| true);
        let trials = generate_trials(&groups, seed, &opts.trials)?;
        let enroll = embed_all(manifest, &corpus.audio, &opts.vad)?;
        let baseline = score_trials(manifest, &trials, &groups, &enroll, &enroll)?;

        let mut rows = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let spec = AnonymizerSpec::McAdams(McAdamsConfig {
                alpha: Some(alpha),
                ..*base
            });
            let audio = anonymize_corpus(corpus, &spec, seed, "test")?;
            let test = embed_all(manifest, &audio, &opts.vad)?;
            let scores = score_trials(manifest, &trials, &groups, &enroll, &test)?;
            let eer = compute_eer(&scores)?;

            let features = features_all(&audio, &opts.vad)?;
            let (clf, utility) = run_utility_task(corpus, &split, &features, opts)?;
            let data = utility_data(corpus, &split, &features);
            let mut test_scores = TrialScoreSet::default();
            for ((x, y), t) in data.test_x.iter().zip(&data.test_y).zip(&data.test_tags) {
                test_scores.push(clf.score(x), *y, Some(t.clone()));
            }
            let disorders: BTreeSet<String> = data
                .test_tags
                .iter()
                .filter_map(|t| t.disorder.clone())
                .filter(|d| d != Label::Control.as_str())
                .collect();
            rows.push(SweepRow {
                alpha,
                eer_percent: eer.eer_percent,
                auroc: utility.overall.auroc,
                accuracy: utility.overall.accuracy,
                sensitivity: utility.overall.sensitivity,
                specificity: utility.overall.specificity,
                subgroup_eer: subgroup_eers(&scores, &scores)
                    .into_iter()
                    .map(|s| (format!("{}={}", s.dimension, s.group), s.eer_anonymized))
                    .collect(),
                disorder_auroc: disorders
                    .into_iter()
                    .map(|d| {
                        let v = slice_auroc(&test_scores, &d);
                        (d, v)
                    })
                    .collect(),
            });
        }
        let eers: Vec<f64> = rows.iter().map(|r| r.eer_percent).collect();
        let aurocs: Vec<f64> = rows.iter().map(|r| r.auroc).collect();
        Ok(SweepReport {
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            n_trials: trials.len(),
            train_speakers: split.train.len(),
            test_speakers: split.test.len(),
            baseline_eer: compute_eer(&baseline)?.eer_percent,
            rows,
            eer_auroc_correlation: pearson_r(&eers, &aurocs).ok(),
        })
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerPair {
    pub original: f64,
    pub anonymized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub method: String,
    pub label_counts: BTreeMap<String, usize>,
    pub n_patients: usize,
    pub n_controls: usize,
    pub combined: EerPair,
    pub patients: EerPair,
    pub controls: EerPair,
    pub utility_original: UtilityReport,
    pub utility_anonymized: UtilityReport,
}

/// All disorders merged into one patient class: EERs for patients, controls and
/// everyone, and utility of models trained on original and anonymized audio.
pub fn run_pooled_eval(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    seed: u64,
    opts: &EvalOptions,
) -> Result<PooledReport, ExperimentError> {
    let manifest = &corpus.manifest;
    let controls: BTreeSet<String> = manifest
        .speakers
        .iter()
        .filter(|s| !s.label.is_patient())
        .map(|s| s.speaker_id.clone())
        .collect();
    let patients: BTreeSet<String> = manifest
        .speakers
        .iter()
        .filter(|s| s.label.is_patient())
        .map(|s| s.speaker_id.clone())
        .collect();
    if controls.is_empty() {
        return Err(ExperimentError::InsufficientSpeakers("pooled evaluation needs controls".into()));
    }
    if patients.is_empty() {
        return Err(ExperimentError::InsufficientSpeakers("pooled evaluation needs patients".into()));
    }
    opts.run(|| {
        let split = make_split(manifest, Task::Pooled, seed)?;
        let audio = if *spec == AnonymizerSpec::Identity {
            corpus.audio.clone()
        } else {
            anonymize_corpus(corpus, spec, seed, "test")?
        };
        let original = embed_all(manifest, &corpus.audio, &opts.vad)?;
        let anonymized = embed_all(manifest, &audio, &opts.vad)?;
        let eer = |set: &BTreeSet<String>| -> Result<EerPair, ExperimentError> {
            let r = privacy_from_embeddings(corpus, set, spec, &original, &anonymized, seed, opts)?;
            Ok(EerPair {
                original: r.original.eer_percent,
                anonymized: r.anonymized.eer_percent,
            })
        };
        let all: BTreeSet<String> = controls.union(&patients).cloned().collect();
        let (_, utility_original) = run_utility_task(corpus, &split, &features_all(&corpus.audio, &opts.vad)?, opts)?;
        let (_, utility_anonymized) = run_utility_task(corpus, &split, &features_all(&audio, &opts.vad)?, opts)?;
        Ok(PooledReport {
            method: spec.name().into(),
            label_counts: manifest
                .label_counts()
                .into_iter()
                .map(|(l, n)| (l.to_string(), n))
                .collect(),
            n_patients: patients.len(),
            n_controls: controls.len(),
            combined: eer(&all)?,
            patients: eer(&patients)?,
            controls: eer(&controls)?,
            utility_original,
            utility_anonymized,
        })
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub method: String,
    pub n_trials: usize,
    /// Original enrollment, original test.
    pub eer_original: f64,
    /// Original enrollment, anonymized test.
    pub eer_naive: f64,
    /// Enrollment on anonymized audio (independent per-speaker draws), anonymized test.
    pub eer_inverse: f64,
}

/// Attacker who re-enrolls speakers from anonymized speech of the same family.
pub fn run_inversion_attack(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    seed: u64,
    opts: &EvalOptions,
) -> Result<InversionReport, ExperimentError> {
    opts.run(|| {
        let manifest = &corpus.manifest;
        let groups = utterance_groups(manifest, |_| true);
        let trials = generate_trials(&groups, seed, &opts.trials)?;
        let original = embed_all(manifest, &corpus.audio, &opts.vad)?;
        let (test, enroll_anon) = if *spec == AnonymizerSpec::Identity {
            (original.clone(), original.clone())
        } else {
            let streams: Vec<Result<Vec<SpeakerEmbedding>, ExperimentError>> = ["test", "enroll"]
                .par_iter()
                .map(|stream| {
                    let audio = anonymize_corpus(corpus, spec, seed, stream)?;
                    embed_all(manifest, &audio, &opts.vad)
                })
                .collect();
            let mut it = streams.into_iter();
            (it.next().unwrap()?, it.next().unwrap()?)
        };
        let eer = |enroll: &[SpeakerEmbedding], test: &[SpeakerEmbedding]| -> Result<f64, ExperimentError> {
            Ok(compute_eer(&score_trials(manifest, &trials, &groups, enroll, test)?)?.eer_percent)
        };
        Ok(InversionReport {
            method: spec.name().into(),
            n_trials: trials.len(),
            eer_original: eer(&original, &original)?,
            eer_naive: eer(&original, &test)?,
            eer_inverse: eer(&enroll_anon, &test)?,
        })
    })?
}

/// Trains and evaluates the reference classifier for `task` on audio processed
/// by `spec` (train and test sides alike).
pub fn run_task_utility(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    task: Task,
    seed: u64,
    opts: &EvalOptions,
) -> Result<UtilityReport, ExperimentError> {
    let split = make_split(&corpus.manifest, task, seed)?;
    opts.run(|| {
        let audio = if *spec == AnonymizerSpec::Identity {
            corpus.audio.clone()
        } else {
            anonymize_corpus(corpus, spec, seed, "test")?
        };
        let features = features_all(&audio, &opts.vad)?;
        Ok(run_utility_task(corpus, &split, &features, opts)?.1)
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub task: String,
    pub privacy: PrivacyReport,
    pub utility: UtilityReport,
}

/// Subgroup privacy and utility of one anonymizer, side by side.
pub fn run_fairness_eval(
    corpus: &Corpus,
    spec: &AnonymizerSpec,
    task: Task,
    seed: u64,
    opts: &EvalOptions,
) -> Result<FairnessReport, ExperimentError> {
    Ok(FairnessReport {
        task: task.name(),
        privacy: run_privacy_eval(corpus, spec, &EmbeddingBackend::Reference, seed, opts)?,
        utility: run_task_utility(corpus, spec, task, seed, opts)?,
    })
}
