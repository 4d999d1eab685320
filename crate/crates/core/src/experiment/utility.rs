use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::classifier::{train_reference_classifier, ReferenceClassifier};
use super::manifest::Corpus;
use super::pipeline::{tags_for, EvalOptions};
use super::split::SplitPlan;
use super::ExperimentError;
use crate::metrics::{
    classification_metrics, compute_auroc, statistical_parity_difference, TrialScoreSet, TrialTags, UtilityMetrics,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupUtility {
    pub dimension: String,
    pub group: String,
    pub n_items: usize,
    /// Accuracy at the overall operating threshold.
    pub accuracy: f64,
    /// `None` when the subgroup holds a single class.
    pub metrics: Option<UtilityMetrics>,
    /// Accuracy gap to the rest of the dimension, as a fraction; 0 when the
    /// dimension has a single group.
    pub ptd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub overall: UtilityMetrics,
    pub n_items: usize,
    pub subgroups: Vec<SubgroupUtility>,
}

fn accuracy_at(set: &TrialScoreSet, threshold: f64) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let correct = set
        .scores
        .iter()
        .zip(&set.labels)
        .filter(|(s, l)| (**s >= threshold) == **l)
        .count();
    100.0 * correct as f64 / set.len() as f64
}

type Dimension = (&'static str, fn(&TrialTags) -> Option<&str>);

const DIMENSIONS: [Dimension; 2] = [
    ("gender", |t| t.gender.as_deref()),
    ("age_group", |t| t.age_group.as_deref()),
];

/// Scores test items and reports overall and per-subgroup utility. The
/// operating threshold is `threshold`, or the Youden point of the full test set.
pub fn run_utility_eval(
    classifier: &ReferenceClassifier,
    features: &[Vec<f64>],
    labels: &[bool],
    tags: &[TrialTags],
    threshold: Option<f64>,
) -> Result<UtilityReport, ExperimentError> {
    if features.len() != labels.len() || (!tags.is_empty() && tags.len() != labels.len()) {
        return Err(ExperimentError::InvalidArgument("features, labels and tags differ in length".into()));
    }
    let mut set = TrialScoreSet::default();
    for (i, f) in features.iter().enumerate() {
        set.push(classifier.score(f), labels[i], tags.get(i).cloned());
    }
    let overall = classification_metrics(&set, threshold)?;
    let mut subgroups = Vec::new();
    if !tags.is_empty() {
        for (dim, get) in DIMENSIONS {
            let groups: BTreeSet<&str> = tags.iter().filter_map(get).collect();
            for g in &groups {
                let inside = set.filter_tags(|t| get(t) == Some(g));
                let outside = set.filter_tags(|t| get(t) != Some(g));
                let accuracy = accuracy_at(&inside, overall.threshold);
                let metrics = classification_metrics(&inside, Some(overall.threshold)).ok();
                let ptd = if groups.len() < 2 {
                    0.0
                } else {
                    statistical_parity_difference(accuracy, accuracy_at(&outside, overall.threshold))
                };
                subgroups.push(SubgroupUtility {
                    dimension: dim.into(),
                    group: g.to_string(),
                    n_items: inside.len(),
                    accuracy,
                    metrics,
                    ptd,
                });
            }
        }
    }
    Ok(UtilityReport {
        overall,
        n_items: set.len(),
        subgroups,
    })
}

/// Per-utterance utility task material for a split.
pub(crate) struct UtilityData {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<bool>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<bool>,
    pub test_tags: Vec<TrialTags>,
}

pub(crate) fn utility_data(corpus: &Corpus, split: &SplitPlan, features: &[Vec<f64>]) -> UtilityData {
    let mut d = UtilityData {
        train_x: Vec::new(),
        train_y: Vec::new(),
        test_x: Vec::new(),
        test_y: Vec::new(),
        test_tags: Vec::new(),
    };
    for (i, u) in corpus.manifest.utterances.iter().enumerate() {
        let Some(spk) = corpus.manifest.speaker(&u.speaker_id) else {
            continue;
        };
        let positive = split.task.is_positive(spk.label);
        if split.train.contains(&u.speaker_id) {
            d.train_x.push(features[i].clone());
            d.train_y.push(positive);
        } else if split.test.contains(&u.speaker_id) {
            d.test_x.push(features[i].clone());
            d.test_y.push(positive);
            d.test_tags.push(tags_for(&corpus.manifest, &u.speaker_id));
        }
    }
    d
}

/// Trains on the split's training speakers and evaluates on its test speakers.
pub fn run_utility_task(
    corpus: &Corpus,
    split: &SplitPlan,
    features: &[Vec<f64>],
    opts: &EvalOptions,
) -> Result<(ReferenceClassifier, UtilityReport), ExperimentError> {
    let d = utility_data(corpus, split, features);
    let clf = train_reference_classifier(&d.train_x, &d.train_y, split.seed, &opts.classifier)?;
    let report = run_utility_eval(&clf, &d.test_x, &d.test_y, &d.test_tags, None)?;
    Ok((clf, report))
}

/// AUROC of `scores` restricted to items whose disorder tag is `disorder` or
/// control; `None` when that slice has a single class.
pub(crate) fn slice_auroc(set: &TrialScoreSet, disorder: &str) -> Option<f64> {
    let slice = set.filter_tags(|t| matches!(t.disorder.as_deref(), Some(d) if d == disorder || d == "control"));
    compute_auroc(&slice).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_classifier(dim: usize, w: f64) -> ReferenceClassifier {
        ReferenceClassifier {
            weights: vec![w; dim],
            bias: 0.0,
            feature_mean: vec![0.0; dim],
            feature_scale: vec![1.0; dim],
            epochs: 0,
            loss_trace: vec![],
        }
    }

    fn tag(g: &str, a: &str) -> TrialTags {
        TrialTags {
            gender: Some(g.into()),
            age_group: Some(a.into()),
            disorder: None,
        }
    }

    #[test]
    fn uninformative_classifier_gives_chance_auroc() {
        let clf = constant_classifier(1, 0.0);
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let r = run_utility_eval(&clf, &x, &y, &[], None).unwrap();
        assert_eq!(r.overall.auroc, 50.0);
    }

    #[test]
    fn single_group_has_zero_parity_gap() {
        let clf = constant_classifier(1, 1.0);
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 - 2.5]).collect();
        let y = vec![false, true, false, true, true, true];
        let tags = vec![tag("F", "adult"); 6];
        let r = run_utility_eval(&clf, &x, &y, &tags, None).unwrap();
        assert!(r.subgroups.iter().all(|s| s.ptd == 0.0));
    }

    #[test]
    fn hand_built_eight_items() {
        // score = sigmoid(x); threshold 0.5 means x >= 0
        let clf = constant_classifier(1, 1.0);
        let x: Vec<Vec<f64>> = [2.0, 1.0, -1.0, 3.0, -2.0, 0.5, -3.0, -0.5]
            .iter()
            .map(|v| vec![*v])
            .collect();
        let y = vec![true, true, true, true, false, false, false, false];
        let tags = vec![
            tag("F", "adult"),
            tag("F", "adult"),
            tag("M", "adult"),
            tag("M", "child"),
            tag("F", "adult"),
            tag("M", "child"),
            tag("F", "child"),
            tag("M", "adult"),
        ];
        let r = run_utility_eval(&clf, &x, &y, &tags, Some(0.5)).unwrap();
        // TP: 2.0, 1.0, 3.0; FN: -1.0; TN: -2.0, -3.0, -0.5; FP: 0.5
        assert_eq!(r.overall.sensitivity, 75.0);
        assert_eq!(r.overall.specificity, 75.0);
        assert_eq!(r.overall.accuracy, 75.0);
        let f = r.subgroups.iter().find(|s| s.group == "F").unwrap();
        let m = r.subgroups.iter().find(|s| s.group == "M").unwrap();
        // F items: TP, TP, TN, TN -> 100%; M items: FN, TP, FP, TN -> 50%
        assert_eq!((f.accuracy, m.accuracy), (100.0, 50.0));
        assert_eq!(f.ptd, 0.5);
        assert_eq!(m.ptd, -0.5);
        let f_metrics = f.metrics.unwrap();
        assert_eq!((f_metrics.sensitivity, f_metrics.specificity), (100.0, 100.0));
    }

    #[test]
    fn single_class_subgroup_is_flagged() {
        let clf = constant_classifier(1, 1.0);
        let x = vec![vec![1.0], vec![-1.0], vec![2.0]];
        let y = vec![true, false, true];
        let tags = vec![tag("F", "adult"), tag("M", "adult"), tag("M", "adult")];
        let r = run_utility_eval(&clf, &x, &y, &tags, None).unwrap();
        let f = r.subgroups.iter().find(|s| s.group == "F").unwrap();
        assert!(f.metrics.is_none());
        assert_eq!(f.n_items, 1);
    }
}
