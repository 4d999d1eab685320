use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// One verification trial: does `test_utterance` belong to `enroll_speaker`?
/// The enrollment model is the centroid of the enrolled speaker's utterances
/// other than the test utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub enroll_speaker: String,
    pub test_utterance: usize,
    pub test_speaker: String,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub positives_per_speaker: usize,
    pub negative_ratio: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            positives_per_speaker: 10,
            negative_ratio: 1.0,
        }
    }
}

/// Seeded trial list over `speakers`, whose utterance indices are given in
/// `utterances` (speaker id → indices). Same-speaker trials need at least two
/// utterances for the speaker; different-speaker trials are drawn without
/// replacement from every (speaker, other speaker's utterance) pair.
pub fn generate_trials(
    utterances: &BTreeMap<String, Vec<usize>>,
    seed: u64,
    config: &TrialConfig,
) -> Result<Vec<Trial>, ExperimentError> {
    if utterances.len() < 2 {
        return Err(ExperimentError::InsufficientSpeakers(format!(
            "trials need at least 2 speakers, got {}",
            utterances.len()
        )));
    }
    if !(config.negative_ratio >= 0.0 && config.negative_ratio.is_finite()) {
        return Err(ExperimentError::InvalidArgument(format!(
            "negative_ratio {}",
            config.negative_ratio
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::new();
    for (spk, utts) in utterances {
        if utts.len() < 2 {
            continue;
        }
        let mut order = utts.clone();
        order.shuffle(&mut rng);
        for &u in order.iter().take(config.positives_per_speaker) {
            trials.push(Trial {
                enroll_speaker: spk.clone(),
                test_utterance: u,
                test_speaker: spk.clone(),
                label: true,
            });
        }
    }
    let n_pos = trials.len();

    let mut candidates = Vec::new();
    for enroll in utterances.keys() {
        for (other, utts) in utterances {
            if other != enroll {
                candidates.extend(utts.iter().map(|&u| (enroll, other, u)));
            }
        }
    }
    let wanted = ((config.negative_ratio * n_pos as f64).round() as usize).min(candidates.len());
    let mut picks = index::sample(&mut rng, candidates.len(), wanted).into_vec();
    picks.sort_unstable();
    trials.extend(picks.into_iter().map(|i| {
        let (enroll, test, u) = candidates[i];
        Trial {
            enroll_speaker: enroll.clone(),
            test_utterance: u,
            test_speaker: test.clone(),
            label: false,
        }
    }));
    Ok(trials)
}
