//! Verification and classification metrics: ROC/EER, AUROC, confusion-matrix
//! rates, statistical parity difference, identification odds, and the two
//! significance statistics used in reports.

mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{correlation, pearson_r, unpaired_t_test, welch_t_test, PearsonResult, TTestResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trial set needs at least one positive and one negative")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("constant input has no defined correlation")]
    ConstantInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Demographic and diagnostic tags carried alongside a trial.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialTags {
    pub gender: Option<String>,
    pub age_group: Option<String>,
    pub disorder: Option<String>,
}

/// Scores with binary labels (`true` = same speaker or positive class).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// Empty, or one entry per score.
    pub tags: Vec<TrialTags>,
}

impl TrialScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, MetricsError> {
        let set = Self {
            scores,
            labels,
            tags: Vec::new(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn from_classes(positives: &[f64], negatives: &[f64]) -> Self {
        let mut scores = positives.to_vec();
        scores.extend_from_slice(negatives);
        let mut labels = vec![true; positives.len()];
        labels.resize(scores.len(), false);
        Self {
            scores,
            labels,
            tags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn push(&mut self, score: f64, label: bool, tags: Option<TrialTags>) {
        self.scores.push(score);
        self.labels.push(label);
        if let Some(t) = tags {
            self.tags.push(t);
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.scores.len() != self.labels.len() {
            return Err(MetricsError::LengthMismatch(self.scores.len(), self.labels.len()));
        }
        if !self.tags.is_empty() && self.tags.len() != self.scores.len() {
            return Err(MetricsError::LengthMismatch(self.scores.len(), self.tags.len()));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        Ok(())
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (pos, self.labels.len() - pos)
    }

    fn check_two_class(&self) -> Result<(usize, usize), MetricsError> {
        self.validate()?;
        let (p, n) = self.counts();
        if p == 0 || n == 0 {
            return Err(MetricsError::SingleClass);
        }
        Ok((p, n))
    }

    /// Trials whose tags satisfy `keep`.
    pub fn filter_tags(&self, keep: impl Fn(&TrialTags) -> bool) -> Self {
        let mut out = Self::default();
        for ((s, l), t) in self.scores.iter().zip(&self.labels).zip(&self.tags) {
            if keep(t) {
                out.push(*s, *l, Some(t.clone()));
            }
        }
        out
    }

    pub fn flipped(&self) -> Self {
        Self {
            scores: self.scores.clone(),
            labels: self.labels.iter().map(|l| !l).collect(),
            tags: self.tags.clone(),
        }
    }
}

/// One step of the ROC: accept when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer_percent: f64,
    pub threshold: f64,
    pub far_at_threshold: f64,
    pub frr_at_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityMetrics {
    pub auroc: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
}

/// FAR/FRR in percent at every distinct score plus `+inf`, thresholds ascending.
pub fn compute_roc(trials: &TrialScoreSet) -> Result<Vec<RocPoint>, MetricsError> {
    let (n_pos, n_neg) = trials.check_two_class()?;
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials.scores[a].total_cmp(&trials.scores[b]));

    let mut points = Vec::new();
    // counts of trials strictly below the current threshold
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = trials.scores[order[i]];
        points.push(RocPoint {
            threshold: t,
            far: 100.0 * (n_neg - neg_below) as f64 / n_neg as f64,
            frr: 100.0 * pos_below as f64 / n_pos as f64,
        });
        while i < order.len() && trials.scores[order[i]] == t {
            if trials.labels[order[i]] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 100.0,
    });
    Ok(points)
}

/// Equal error rate by linear interpolation across the sign change of FAR−FRR.
pub fn compute_eer(trials: &TrialScoreSet) -> Result<EerResult, MetricsError> {
    let roc = compute_roc(trials)?;
    let diff = |p: &RocPoint| p.far - p.frr;
    // the first point always has FRR = 0, FAR = 100 so diff > 0 there
    let k = roc
        .iter()
        .position(|p| diff(p) <= 0.0)
        .expect("last ROC point has FAR 0 and FRR 100");
    let b = roc[k];
    if diff(&b) == 0.0 || k == 0 {
        return Ok(EerResult {
            eer_percent: b.far,
            threshold: b.threshold,
            far_at_threshold: b.far,
            frr_at_threshold: b.frr,
        });
    }
    let a = roc[k - 1];
    let lam = diff(&a) / (diff(&a) - diff(&b));
    let far = a.far + lam * (b.far - a.far);
    let frr = a.frr + lam * (b.frr - a.frr);
    let threshold = if b.threshold.is_finite() {
        a.threshold + lam * (b.threshold - a.threshold)
    } else {
        a.threshold
    };
    Ok(EerResult {
        eer_percent: far,
        threshold,
        far_at_threshold: far,
        frr_at_threshold: frr,
    })
}

/// Mann-Whitney AUROC in percent; ties count one half.
pub fn compute_auroc(trials: &TrialScoreSet) -> Result<f64, MetricsError> {
    let (n_pos, n_neg) = trials.check_two_class()?;
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials.scores[a].total_cmp(&trials.scores[b]));
    // twice the U statistic, kept integral
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let t = trials.scores[order[i]];
        let (mut p, mut n) = (0u128, 0u128);
        while i < order.len() && trials.scores[order[i]] == t {
            if trials.labels[order[i]] {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        twice_u += p * (2 * neg_below + n);
        neg_below += n;
    }
    Ok(100.0 * twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Threshold maximizing sensitivity + specificity; ties keep the lowest.
pub fn youden_threshold(trials: &TrialScoreSet) -> Result<f64, MetricsError> {
    let roc = compute_roc(trials)?;
    let mut best = (f64::NEG_INFINITY, roc[0].threshold);
    for p in &roc {
        let j = (100.0 - p.frr) + (100.0 - p.far);
        if j > best.0 {
            best = (j, p.threshold);
        }
    }
    Ok(best.1)
}

/// Confusion-matrix rates at `threshold` (predict positive when `score >= threshold`);
/// `None` picks the Youden point.
pub fn classification_metrics(
    trials: &TrialScoreSet,
    threshold: Option<f64>,
) -> Result<UtilityMetrics, MetricsError> {
    let (n_pos, n_neg) = trials.check_two_class()?;
    let threshold = match threshold {
        Some(t) => t,
        None => youden_threshold(trials)?,
    };
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (&s, &l) in trials.scores.iter().zip(&trials.labels) {
        match (l, s >= threshold) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    Ok(UtilityMetrics {
        auroc: compute_auroc(trials)?,
        accuracy: 100.0 * (tp + tn) as f64 / trials.len() as f64,
        sensitivity: 100.0 * tp as f64 / n_pos as f64,
        specificity: 100.0 * tn as f64 / n_neg as f64,
        threshold,
    })
}

/// Accuracy disparity as a signed fraction; positive favours the minority group.
pub fn statistical_parity_difference(accuracy_minority: f64, accuracy_majority: f64) -> f64 {
    (accuracy_minority - accuracy_majority) / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentificationOdds {
    pub expected_false_accepts: f64,
    pub odds_denominator: u64,
}

/// Expected false accepts when one utterance is compared against every other
/// speaker at the given EER; odds of a correct identification are 1:denominator.
pub fn identification_odds(n_speakers: u64, eer_percent: f64) -> Result<IdentificationOdds, MetricsError> {
    if n_speakers < 2 {
        return Err(MetricsError::InvalidArgument(format!(
            "need at least 2 speakers, got {n_speakers}"
        )));
    }
    if !(0.0..=100.0).contains(&eer_percent) {
        return Err(MetricsError::InvalidArgument(format!("EER {eer_percent}% outside [0, 100]")));
    }
    let expected = (n_speakers - 1) as f64 * eer_percent / 100.0;
    Ok(IdentificationOdds {
        expected_false_accepts: expected,
        odds_denominator: (expected.round() as u64).max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent EER: evaluate the step ROC at thresholds between adjacent
    /// distinct scores and intersect the bracketing segment.
    fn brute_force_eer(pos: &[f64], neg: &[f64]) -> f64 {
        let mut all: Vec<f64> = pos.iter().chain(neg).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        let mut ts = vec![all[0] - 1.0];
        ts.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        ts.push(all[all.len() - 1] + 1.0);
        let rates: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| {
                let far = neg.iter().filter(|&&s| s > t).count() as f64 / neg.len() as f64 * 100.0;
                let frr = pos.iter().filter(|&&s| s < t).count() as f64 / pos.len() as f64 * 100.0;
                (far, frr)
            })
            .collect();
        for w in rates.windows(2) {
            let (f0, r0) = w[0];
            let (f1, r1) = w[1];
            let d0 = f0 - r0;
            let d1 = f1 - r1;
            if d0 == 0.0 {
                return f0;
            }
            if d0 > 0.0 && d1 <= 0.0 {
                let lam = d0 / (d0 - d1);
                return f0 + lam * (f1 - f0);
            }
        }
        unreachable!()
    }

    fn pair_count_auroc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        100.0 * wins / (pos.len() * neg.len()) as f64
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for _ in 0..n {
            let mut s: f64 = rng.random();
            if coarse {
                s = (s * 10.0).floor() / 10.0;
            }
            if rng.random_bool(0.5) {
                pos.push(s + 0.2);
            } else {
                neg.push(s);
            }
        }
        if pos.is_empty() {
            pos.push(0.5);
        }
        if neg.is_empty() {
            neg.push(0.5);
        }
        (pos, neg)
    }

    #[test]
    fn separable_roc_has_origin() {
        let roc = compute_roc(&TrialScoreSet::from_classes(&[1.0], &[0.0])).unwrap();
        assert!(roc.iter().any(|p| p.far == 0.0 && p.frr == 0.0 && p.threshold.is_finite()));
    }

    #[test]
    fn constant_scores_give_degenerate_roc() {
        let roc = compute_roc(&TrialScoreSet::from_classes(&[0.3, 0.3], &[0.3])).unwrap();
        let pts: Vec<(f64, f64)> = roc.iter().map(|p| (p.far, p.frr)).collect();
        assert_eq!(pts, vec![(100.0, 0.0), (0.0, 100.0)]);
    }

    #[test]
    fn hand_enumerated_roc() {
        // thresholds 0.1, 0.4, 0.6, 0.7, +inf
        let roc = compute_roc(&TrialScoreSet::from_classes(&[0.7, 0.4], &[0.6, 0.1])).unwrap();
        let pts: Vec<(f64, f64, f64)> = roc.iter().map(|p| (p.threshold, p.far, p.frr)).collect();
        assert_eq!(
            pts,
            vec![
                (0.1, 100.0, 0.0),
                (0.4, 50.0, 0.0),
                (0.6, 50.0, 50.0),
                (0.7, 0.0, 50.0),
                (f64::INFINITY, 0.0, 100.0),
            ]
        );
    }

    #[test]
    fn roc_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, n) = random_set(&mut rng, 300, true);
        let roc = compute_roc(&TrialScoreSet::from_classes(&p, &n)).unwrap();
        for w in roc.windows(2) {
            assert!(w[1].far <= w[0].far && w[1].frr >= w[0].frr);
        }
    }

    #[test]
    fn single_class_rejected() {
        let t = TrialScoreSet::from_classes(&[0.1, 0.2], &[]);
        assert_eq!(compute_eer(&t), Err(MetricsError::SingleClass));
        assert_eq!(compute_auroc(&t), Err(MetricsError::SingleClass));
        assert_eq!(compute_roc(&t), Err(MetricsError::SingleClass));
    }

    #[test]
    fn eer_extremes() {
        let sep = TrialScoreSet::from_classes(&[0.9, 0.8], &[0.1, 0.2, 0.3]);
        assert_eq!(compute_eer(&sep).unwrap().eer_percent, 0.0);
        let same = TrialScoreSet::from_classes(&[0.1, 0.5, 0.9], &[0.9, 0.1, 0.5]);
        assert!((compute_eer(&same).unwrap().eer_percent - 50.0).abs() < 1e-12);
    }

    #[test]
    fn eer_matches_brute_force_on_200() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let (p, n) = random_set(&mut rng, 200, false);
        let got = compute_eer(&TrialScoreSet::from_classes(&p, &n)).unwrap();
        assert!((got.eer_percent - brute_force_eer(&p, &n)).abs() < 1e-9);
        assert!((got.far_at_threshold - got.frr_at_threshold).abs() < 1e-9);
    }

    #[test]
    fn eer_matches_brute_force_on_1000_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        for i in 0..1000 {
            let n = rng.random_range(10..=500);
            let (p, q) = random_set(&mut rng, n, i % 2 == 0);
            let got = compute_eer(&TrialScoreSet::from_classes(&p, &q)).unwrap().eer_percent;
            let want = brute_force_eer(&p, &q);
            assert!((got - want).abs() < 1e-9, "set {i}: {got} vs {want}");
        }
    }

    #[test]
    fn auroc_cases() {
        let sep = TrialScoreSet::from_classes(&[0.9], &[0.1]);
        assert_eq!(compute_auroc(&sep).unwrap(), 100.0);
        let same = TrialScoreSet::from_classes(&[0.2, 0.6], &[0.6, 0.2]);
        assert_eq!(compute_auroc(&same).unwrap(), 50.0);
        let hand = TrialScoreSet::from_classes(&[0.8], &[0.2, 0.9]);
        assert_eq!(compute_auroc(&hand).unwrap(), 50.0);
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..200 {
            let (p, n) = random_set(&mut rng, 5 + i, i % 3 == 0);
            let got = compute_auroc(&TrialScoreSet::from_classes(&p, &n)).unwrap();
            assert!((got - pair_count_auroc(&p, &n)).abs() < 1e-9);
        }
    }

    #[test]
    fn hand_confusion_matrix() {
        let t = TrialScoreSet::from_classes(&[0.9, 0.4], &[0.6, 0.1]);
        let m = classification_metrics(&t, Some(0.5)).unwrap();
        // the hand case: TP=1 (0.9), FN=1 (0.4), TN=1 (0.1), FP=1 (0.6)
        assert_eq!((m.accuracy, m.sensitivity, m.specificity), (50.0, 50.0, 50.0));
        let t = TrialScoreSet::from_classes(&[0.9, 0.4], &[0.3, 0.1]);
        let m = classification_metrics(&t, Some(0.5)).unwrap();
        assert_eq!((m.accuracy, m.sensitivity, m.specificity), (75.0, 50.0, 100.0));
    }

    #[test]
    fn separable_with_youden_threshold() {
        let t = TrialScoreSet::from_classes(&[0.9, 0.7], &[0.3, 0.1]);
        let m = classification_metrics(&t, None).unwrap();
        assert_eq!((m.accuracy, m.sensitivity, m.specificity), (100.0, 100.0, 100.0));
        assert!(m.threshold > 0.3 && m.threshold <= 0.7);
        let all_pos = classification_metrics(&t, Some(-1.0)).unwrap();
        assert_eq!((all_pos.sensitivity, all_pos.specificity), (100.0, 0.0));
    }

    #[test]
    fn parity_difference() {
        assert_eq!(statistical_parity_difference(80.0, 80.0), 0.0);
        assert!((statistical_parity_difference(90.0, 88.0) - 0.02).abs() < 1e-12);
        // one accuracy pair yields +0.02 for one subgroup and -0.02 for the other
        let f = statistical_parity_difference(90.0, 88.0);
        let m = statistical_parity_difference(88.0, 90.0);
        assert!((f - 0.02).abs() < 1e-12 && (m + 0.02).abs() < 1e-12);
    }

    #[test]
    fn odds_reported_figures() {
        let o = identification_odds(2742, 4.02).unwrap();
        assert!((o.expected_false_accepts - 110.1882).abs() < 1e-9);
        assert_eq!(o.odds_denominator, 110);
        assert_eq!(identification_odds(1443, 2.96).unwrap().odds_denominator, 43);
        assert_eq!(identification_odds(78, 38.86).unwrap().odds_denominator, 30);
        assert_eq!(identification_odds(5, 0.0).unwrap().odds_denominator, 1);
        assert!(identification_odds(1, 5.0).is_err());
        assert!(identification_odds(10, 101.0).is_err());
    }

    proptest! {
        #[test]
        fn eer_invariant_under_monotone_transform(
            raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 4..120)
        ) {
            let mut t = TrialScoreSet::default();
            for (s, l) in &raw {
                t.push(*s, *l, None);
            }
            let (p, n) = t.counts();
            prop_assume!(p > 0 && n > 0);
            let mut u = t.clone();
            u.scores.iter_mut().for_each(|s| *s = (3.0 * *s).exp() - 7.0);
            let a = compute_eer(&t).unwrap().eer_percent;
            let b = compute_eer(&u).unwrap().eer_percent;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn auroc_flip_complements(
            raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..120)
        ) {
            let mut t = TrialScoreSet::default();
            for (s, l) in &raw {
                t.push((*s * 20.0).round() / 20.0, *l, None);
            }
            let (p, n) = t.counts();
            prop_assume!(p > 0 && n > 0);
            let a = compute_auroc(&t).unwrap();
            let b = compute_auroc(&t.flipped()).unwrap();
            prop_assert!((a + b - 100.0).abs() < 1e-9);
        }

        #[test]
        fn odds_monotone(n in 2u64..5000, dn in 0u64..100, e in 0.0f64..90.0, de in 0.0f64..10.0) {
            let a = identification_odds(n, e).unwrap();
            let b = identification_odds(n + dn, e).unwrap();
            let c = identification_odds(n, e + de).unwrap();
            prop_assert!(b.expected_false_accepts >= a.expected_false_accepts);
            prop_assert!(c.expected_false_accepts >= a.expected_false_accepts);
            prop_assert!(b.odds_denominator >= a.odds_denominator);
            prop_assert!(c.odds_denominator >= a.odds_denominator);
        }

        #[test]
        fn parity_antisymmetric(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            prop_assert_eq!(statistical_parity_difference(a, b), -statistical_parity_difference(b, a));
        }
    }
}
