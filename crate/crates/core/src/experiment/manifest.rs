use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::audio_io::{read_wav, write_wav, AudioClip};

pub const SPEAKERS_FILE: &str = "speakers.csv";
pub const UTTERANCES_FILE: &str = "utterances.csv";

macro_rules! string_enum {
    ($name:ident, $what:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ExperimentError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(ExperimentError::Manifest(format!(
                        concat!("unknown ", $what, " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

string_enum!(Gender, "gender", { Female => "F", Male => "M" });
string_enum!(AgeGroup, "age group", { Adult => "adult", Child => "child" });
string_enum!(Label, "label", {
    Control => "control",
    Dysarthria => "dysarthria",
    Dysglossia => "dysglossia",
    Dysphonia => "dysphonia",
    Clp => "clp",
    Other => "other",
});

impl Label {
    pub fn is_patient(self) -> bool {
        self != Label::Control
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub gender: Gender,
    pub age_group: AgeGroup,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub speakers: Vec<SpeakerRecord>,
    pub utterances: Vec<UtteranceRecord>,
}

impl DatasetManifest {
    pub fn new(speakers: Vec<SpeakerRecord>, utterances: Vec<UtteranceRecord>) -> Result<Self, ExperimentError> {
        let m = Self { speakers, utterances };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut ids = HashSet::new();
        for s in &self.speakers {
            if s.speaker_id.is_empty() {
                return Err(ExperimentError::Manifest("empty speaker_id".into()));
            }
            if !ids.insert(s.speaker_id.as_str()) {
                return Err(ExperimentError::Manifest(format!("duplicate speaker_id {:?}", s.speaker_id)));
            }
        }
        let mut utts = HashSet::new();
        let mut with_audio = HashSet::new();
        for u in &self.utterances {
            if !utts.insert(u.utterance_id.as_str()) {
                return Err(ExperimentError::Manifest(format!(
                    "duplicate utterance_id {:?}",
                    u.utterance_id
                )));
            }
            if !ids.contains(u.speaker_id.as_str()) {
                return Err(ExperimentError::Manifest(format!(
                    "dangling speaker {:?} referenced by utterance {:?}",
                    u.speaker_id, u.utterance_id
                )));
            }
            with_audio.insert(u.speaker_id.as_str());
        }
        if let Some(s) = self.speakers.iter().find(|s| !with_audio.contains(s.speaker_id.as_str())) {
            return Err(ExperimentError::Manifest(format!(
                "speaker {:?} has no utterances",
                s.speaker_id
            )));
        }
        Ok(())
    }

    pub fn speaker(&self, id: &str) -> Option<&SpeakerRecord> {
        self.speakers.iter().find(|s| s.speaker_id == id)
    }

    pub fn speaker_index(&self) -> BTreeMap<&str, &SpeakerRecord> {
        self.speakers.iter().map(|s| (s.speaker_id.as_str(), s)).collect()
    }

    /// Utterance indices grouped by speaker, in manifest order.
    pub fn utterances_by_speaker(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, u) in self.utterances.iter().enumerate() {
            map.entry(u.speaker_id.as_str()).or_default().push(i);
        }
        map
    }

    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.speakers {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    /// Writes `speakers.csv` and `utterances.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(SPEAKERS_FILE))?;
        w.write_record(["speaker_id", "gender", "age_group", "label"])?;
        for s in &self.speakers {
            w.write_record([s.speaker_id.as_str(), s.gender.as_str(), s.age_group.as_str(), s.label.as_str()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(UTTERANCES_FILE))?;
        w.write_record(["utterance_id", "speaker_id", "path"])?;
        for u in &self.utterances {
            w.write_record([
                u.utterance_id.as_str(),
                u.speaker_id.as_str(),
                &u.path.to_string_lossy(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_table(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>, ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ExperimentError::Manifest(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(ExperimentError::Manifest(format!(
            "{}: header must be {}",
            path.display(),
            expected.join(",")
        )));
    }
    rdr.records()
        .map(|r| r.map_err(|e| ExperimentError::Manifest(format!("{}: {e}", path.display()))))
        .collect()
}

/// Loads a manifest directory (or either of its two CSV files). Relative audio
/// paths are resolved against the manifest directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ExperimentError> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else if path.exists() {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        return Err(ExperimentError::Manifest(format!("no manifest at {}", path.display())));
    };
    let speakers = read_table(&dir.join(SPEAKERS_FILE), &["speaker_id", "gender", "age_group", "label"])?
        .into_iter()
        .map(|r| {
            Ok(SpeakerRecord {
                speaker_id: r[0].to_string(),
                gender: r[1].parse()?,
                age_group: r[2].parse()?,
                label: r[3].parse()?,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let utterances = read_table(&dir.join(UTTERANCES_FILE), &["utterance_id", "speaker_id", "path"])?
        .into_iter()
        .map(|r| {
            let p = PathBuf::from(&r[2]);
            UtteranceRecord {
                utterance_id: r[0].to_string(),
                speaker_id: r[1].to_string(),
                path: if p.is_absolute() { p } else { dir.join(p) },
            }
        })
        .collect();
    DatasetManifest::new(speakers, utterances)
}

/// A manifest together with its decoded audio, index-aligned with
/// `manifest.utterances`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub audio: Vec<AudioClip>,
}

impl Corpus {
    pub fn new(manifest: DatasetManifest, audio: Vec<AudioClip>) -> Result<Self, ExperimentError> {
        manifest.validate()?;
        if audio.len() != manifest.utterances.len() {
            return Err(ExperimentError::Manifest(format!(
                "{} clips for {} utterances",
                audio.len(),
                manifest.utterances.len()
            )));
        }
        Ok(Self { manifest, audio })
    }

    pub fn load(manifest: DatasetManifest) -> Result<Self, ExperimentError> {
        let audio = manifest
            .utterances
            .par_iter()
            .map(|u| {
                read_wav(&u.path)
                    .map(|c| c.with_source_id(u.utterance_id.clone()))
                    .map_err(ExperimentError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(manifest, audio)
    }

    /// Writes WAVs under `dir/audio/<speaker>/` and the manifest CSVs with
    /// relative paths. Returns the WAV paths in utterance order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut manifest = self.manifest.clone();
        let mut written = Vec::with_capacity(self.audio.len());
        for (u, clip) in manifest.utterances.iter_mut().zip(&self.audio) {
            let rel = PathBuf::from("audio")
                .join(&u.speaker_id)
                .join(format!("{}.wav", u.utterance_id));
            let full = dir.join(&rel);
            std::fs::create_dir_all(full.parent().expect("joined path has a parent"))?;
            write_wav(clip, &full)?;
            written.push(full);
            u.path = rel;
        }
        manifest.write(dir)?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, speakers: &str, utterances: &str) {
        std::fs::write(dir.join(SPEAKERS_FILE), speakers).unwrap();
        std::fs::write(dir.join(UTTERANCES_FILE), utterances).unwrap();
    }

    const SPK: &str = "speaker_id,gender,age_group,label\ns1,F,adult,control\ns2,M,adult,dysarthria\ns3,F,child,clp\n";

    #[test]
    fn loads_well_formed() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), SPK, "utterance_id,speaker_id,path\nu1,s1,a.wav\nu2,s2,b.wav\nu3,s3,/abs/c.wav\n");
        let m = load_manifest(d.path()).unwrap();
        assert_eq!(m.speakers.len(), 3);
        assert_eq!(m.speakers[2].label, Label::Clp);
        assert_eq!(m.utterances[0].path, d.path().join("a.wav"));
        assert_eq!(m.utterances[2].path, PathBuf::from("/abs/c.wav"));
        assert_eq!(load_manifest(&d.path().join(SPEAKERS_FILE)).unwrap(), m);
    }

    #[test]
    fn dangling_speaker() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), SPK, "utterance_id,speaker_id,path\nu1,s1,a\nu2,s2,b\nu3,s3,c\nu4,s9,d\n");
        let e = load_manifest(d.path()).unwrap_err();
        assert!(e.to_string().contains("dangling speaker"), "{e}");
    }

    #[test]
    fn duplicates_and_unknown_values() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), SPK, "utterance_id,speaker_id,path\nu1,s1,a\nu1,s2,b\nu3,s3,c\n");
        assert!(load_manifest(d.path()).unwrap_err().to_string().contains("duplicate utterance_id"));
        write(
            d.path(),
            "speaker_id,gender,age_group,label\ns1,F,adult,control\ns1,M,adult,control\n",
            "utterance_id,speaker_id,path\nu1,s1,a\n",
        );
        assert!(load_manifest(d.path()).unwrap_err().to_string().contains("duplicate speaker_id"));
        write(
            d.path(),
            "speaker_id,gender,age_group,label\ns1,X,adult,control\n",
            "utterance_id,speaker_id,path\nu1,s1,a\n",
        );
        assert!(load_manifest(d.path()).unwrap_err().to_string().contains("unknown gender"));
        write(
            d.path(),
            "speaker_id,gender,age_group,label\ns1,F,adult,stutter\n",
            "utterance_id,speaker_id,path\nu1,s1,a\n",
        );
        assert!(load_manifest(d.path()).unwrap_err().to_string().contains("unknown label"));
    }

    #[test]
    fn speaker_without_audio() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), SPK, "utterance_id,speaker_id,path\nu1,s1,a\nu2,s2,b\n");
        assert!(load_manifest(d.path()).unwrap_err().to_string().contains("no utterances"));
    }

    #[test]
    fn write_then_load() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), SPK, "utterance_id,speaker_id,path\nu1,s1,a.wav\nu2,s2,b.wav\nu3,s3,c.wav\n");
        let m = load_manifest(d.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        m.write(out.path()).unwrap();
        assert_eq!(load_manifest(out.path()).unwrap().speakers, m.speakers);
    }
}
