use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{AgeGroup, DatasetManifest, Label};
use super::ExperimentError;

pub const TRAIN_FRACTION: f64 = 0.7;

/// Which patients form the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Disorder(Label),
    /// Every non-control speaker is a patient.
    Pooled,
}

impl Task {
    pub fn is_positive(self, label: Label) -> bool {
        match self {
            Task::Disorder(l) => label == l,
            Task::Pooled => label.is_patient(),
        }
    }

    pub fn name(self) -> String {
        match self {
            Task::Disorder(l) => l.to_string(),
            Task::Pooled => "pooled".into(),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "pooled" {
            return Ok(Task::Pooled);
        }
        match s.parse::<Label>()? {
            Label::Control => Err(ExperimentError::InvalidArgument("control is not a disorder task".into())),
            l => Ok(Task::Disorder(l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub task: Task,
    pub age_scope: AgeGroup,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
    pub patient_cap_ratio: f64,
    pub control_cap_ratio: f64,
}

impl SplitPlan {
    /// Speaker ids in either partition.
    pub fn all(&self) -> BTreeSet<String> {
        self.train.union(&self.test).cloned().collect()
    }
}

fn shuffled(mut ids: Vec<String>, seed: u64, salt: u64) -> Vec<String> {
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    ids.shuffle(&mut rng);
    ids
}

fn cap(v: &mut Vec<String>, limit: f64) {
    let limit = limit.floor() as usize;
    v.truncate(limit.min(v.len()));
}

/// Seeded speaker-level 70/30 split with the class-balance caps.
///
/// The age scope of a task is the majority age group of its patients. For an
/// adult task only adult controls are eligible and patients are capped at
/// `2×` the controls of the same partition; for a child task only child
/// controls are eligible and controls are capped at `1.5×` the patients.
/// `Task::Pooled` keeps controls of every age.
pub fn make_split(manifest: &DatasetManifest, task: Task, seed: u64) -> Result<SplitPlan, ExperimentError> {
    let patients: Vec<_> = manifest
        .speakers
        .iter()
        .filter(|s| task.is_positive(s.label))
        .collect();
    let children = patients.iter().filter(|s| s.age_group == AgeGroup::Child).count();
    let age_scope = if 2 * children > patients.len() {
        AgeGroup::Child
    } else {
        AgeGroup::Adult
    };
    let controls: Vec<String> = manifest
        .speakers
        .iter()
        .filter(|s| s.label == Label::Control)
        .filter(|s| task == Task::Pooled || s.age_group == age_scope)
        .map(|s| s.speaker_id.clone())
        .collect();
    let patients: Vec<String> = patients.into_iter().map(|s| s.speaker_id.clone()).collect();
    if patients.len() < 2 || controls.len() < 2 {
        return Err(ExperimentError::InsufficientSpeakers(format!(
            "task {} needs at least 2 patients and 2 controls, found {} and {}",
            task.name(),
            patients.len(),
            controls.len()
        )));
    }

    let split = |ids: Vec<String>, salt| {
        let ids = shuffled(ids, seed, salt);
        let n_train = (TRAIN_FRACTION * ids.len() as f64).floor() as usize;
        let (a, b) = ids.split_at(n_train);
        (a.to_vec(), b.to_vec())
    };
    let (mut train_c, mut test_c) = split(controls, 1);
    let (mut train_p, mut test_p) = split(patients, 2);

    let patient_cap_ratio = 2.0;
    let control_cap_ratio = 1.5;
    match age_scope {
        AgeGroup::Adult => {
            cap(&mut train_p, patient_cap_ratio * train_c.len() as f64);
            cap(&mut test_p, patient_cap_ratio * test_c.len() as f64);
        }
        AgeGroup::Child => {
            cap(&mut train_c, control_cap_ratio * train_p.len() as f64);
            cap(&mut test_c, control_cap_ratio * test_p.len() as f64);
        }
    }

    Ok(SplitPlan {
        task,
        age_scope,
        train: train_c.into_iter().chain(train_p).collect(),
        test: test_c.into_iter().chain(test_p).collect(),
        seed,
        patient_cap_ratio,
        control_cap_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::manifest::{Gender, SpeakerRecord, UtteranceRecord};

    fn manifest(groups: &[(Label, AgeGroup, usize)]) -> DatasetManifest {
        let mut speakers = Vec::new();
        let mut utterances = Vec::new();
        for (label, age, n) in groups {
            for i in 0..*n {
                let id = format!("{label}_{age}_{i:04}");
                utterances.push(UtteranceRecord {
                    utterance_id: format!("{id}_u0"),
                    speaker_id: id.clone(),
                    path: "x.wav".into(),
                });
                speakers.push(SpeakerRecord {
                    speaker_id: id,
                    gender: if i % 2 == 0 { Gender::Female } else { Gender::Male },
                    age_group: *age,
                    label: *label,
                });
            }
        }
        DatasetManifest::new(speakers, utterances).unwrap()
    }

    fn count(_plan: &SplitPlan, m: &DatasetManifest, set: &BTreeSet<String>, label: Label) -> usize {
        set.iter().filter(|id| m.speaker(id).unwrap().label == label).count()
    }

    #[test]
    fn adult_cap_lands_on_168() {
        let m = manifest(&[(Label::Control, AgeGroup::Adult, 81), (Label::Dysarthria, AgeGroup::Adult, 542)]);
        let plan = make_split(&m, Task::Disorder(Label::Dysarthria), 7).unwrap();
        // floor(0.7*81) = 56 controls; patients floor(0.7*542) = 379 capped at 112
        assert_eq!(count(&plan, &m, &plan.train, Label::Control), 56);
        assert_eq!(count(&plan, &m, &plan.train, Label::Dysarthria), 112);
        assert_eq!(plan.train.len(), 168);
        assert_eq!(count(&plan, &m, &plan.test, Label::Control), 25);
        assert_eq!(count(&plan, &m, &plan.test, Label::Dysarthria), 50);
        assert!(plan.train.is_disjoint(&plan.test));
        assert_eq!(make_split(&m, Task::Disorder(Label::Dysarthria), 7).unwrap(), plan);
        assert_ne!(make_split(&m, Task::Disorder(Label::Dysarthria), 8).unwrap().train, plan.train);
    }

    #[test]
    fn no_cap_binds_on_balanced_classes() {
        let m = manifest(&[(Label::Control, AgeGroup::Adult, 10), (Label::Dysphonia, AgeGroup::Adult, 10)]);
        let plan = make_split(&m, Task::Disorder(Label::Dysphonia), 1).unwrap();
        assert_eq!(count(&plan, &m, &plan.train, Label::Control), 7);
        assert_eq!(count(&plan, &m, &plan.train, Label::Dysphonia), 7);
        assert_eq!(count(&plan, &m, &plan.test, Label::Control), 3);
        assert_eq!(count(&plan, &m, &plan.test, Label::Dysphonia), 3);
    }

    #[test]
    fn child_task_caps_controls() {
        let m = manifest(&[
            (Label::Control, AgeGroup::Child, 100),
            (Label::Control, AgeGroup::Adult, 30),
            (Label::Clp, AgeGroup::Child, 20),
        ]);
        let plan = make_split(&m, Task::Disorder(Label::Clp), 3).unwrap();
        assert_eq!(plan.age_scope, AgeGroup::Child);
        // 14 train patients -> at most 21 controls; 6 test patients -> 9
        assert_eq!(count(&plan, &m, &plan.train, Label::Control), 21);
        assert_eq!(count(&plan, &m, &plan.test, Label::Control), 9);
        assert!(plan
            .all()
            .iter()
            .all(|id| m.speaker(id).unwrap().age_group == AgeGroup::Child));
    }

    #[test]
    fn pooled_task_uses_all_patients() {
        let m = manifest(&[
            (Label::Control, AgeGroup::Adult, 10),
            (Label::Dysarthria, AgeGroup::Adult, 4),
            (Label::Dysphonia, AgeGroup::Adult, 4),
        ]);
        let plan = make_split(&m, Task::Pooled, 3).unwrap();
        let patients = plan.all().iter().filter(|id| m.speaker(id).unwrap().label.is_patient()).count();
        assert_eq!(patients, 8);
    }

    #[test]
    fn insufficient_speakers() {
        let m = manifest(&[(Label::Control, AgeGroup::Adult, 10), (Label::Dysarthria, AgeGroup::Adult, 1)]);
        assert!(matches!(
            make_split(&m, Task::Disorder(Label::Dysarthria), 1),
            Err(ExperimentError::InsufficientSpeakers(_))
        ));
    }
}
