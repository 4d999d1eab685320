//! Reference speaker embedding (per-band mean and standard deviation of log-Mel
//! energies), external embedding ingestion, enrollment and cosine scoring.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::MelSpectrogram;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("inconsistent dimension: row {row} has {got} values, expected {expected}")]
    InconsistentDimension { row: usize, got: usize, expected: usize },
    #[error("non-numeric value {value:?} in row {row}")]
    NonNumeric { row: usize, value: String },
    #[error("duplicate utterance_id {0:?}")]
    DuplicateUtterance(String),
    #[error("degenerate embedding (zero or non-finite norm) for {0:?}")]
    Degenerate(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot enroll from an empty collection")]
    EmptyEnrollment,
    #[error("enrollment mixes speakers {0:?} and {1:?}")]
    MixedSpeakers(String, String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub vector: Vec<f64>,
    pub speaker_id: String,
    pub utterance_id: Option<String>,
}

impl SpeakerEmbedding {
    /// Normalizes `vector` to unit length.
    pub fn new(
        vector: Vec<f64>,
        speaker_id: impl Into<String>,
        utterance_id: Option<String>,
    ) -> Result<Self, EmbeddingError> {
        let speaker_id = speaker_id.into();
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(EmbeddingError::Degenerate(
                utterance_id.clone().unwrap_or_else(|| speaker_id.clone()),
            ));
        }
        Ok(Self {
            vector: vector.into_iter().map(|v| v / norm).collect(),
            speaker_id,
            utterance_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Statistics pooling: per-band mean followed by per-band population standard
/// deviation, then L2 normalization.
pub fn embed_utterance(
    mel: &MelSpectrogram,
    speaker_id: impl Into<String>,
) -> Result<SpeakerEmbedding, EmbeddingError> {
    let n = mel.frames.len();
    if n < 2 {
        return Err(EmbeddingError::TooFewFrames(n));
    }
    let bands = mel.frames[0].len();
    let mut mean = vec![0.0; bands];
    for f in &mel.frames {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; bands];
    for f in &mel.frames {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut vector = mean;
    vector.extend(var.into_iter().map(|s| (s / n as f64).sqrt()));
    SpeakerEmbedding::new(vector, speaker_id, mel.source_id.clone())
}

pub fn cosine_score(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Normalized mean of one speaker's embeddings.
pub fn enroll_speaker(embeddings: &[SpeakerEmbedding]) -> Result<SpeakerEmbedding, EmbeddingError> {
    let first = embeddings.first().ok_or(EmbeddingError::EmptyEnrollment)?;
    let mut sum = vec![0.0; first.dim()];
    for e in embeddings {
        if e.speaker_id != first.speaker_id {
            return Err(EmbeddingError::MixedSpeakers(
                first.speaker_id.clone(),
                e.speaker_id.clone(),
            ));
        }
        if e.dim() != first.dim() {
            return Err(EmbeddingError::DimensionMismatch(first.dim(), e.dim()));
        }
        for (s, v) in sum.iter_mut().zip(&e.vector) {
            *s += v;
        }
    }
    SpeakerEmbedding::new(sum, first.speaker_id.clone(), None)
}

/// Reads `utterance_id,speaker_id,v1..vD` rows; every vector is normalized.
pub fn read_embeddings(reader: impl Read) -> Result<Vec<SpeakerEmbedding>, EmbeddingError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "utterance_id" || &headers[1] != "speaker_id" {
        return Err(EmbeddingError::Format(
            "header must be utterance_id,speaker_id,v1..vD".into(),
        ));
    }
    let dim = headers.len() - 2;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != dim + 2 {
            return Err(EmbeddingError::InconsistentDimension {
                row,
                got: rec.len().saturating_sub(2),
                expected: dim,
            });
        }
        let utt = rec[0].to_string();
        if !seen.insert(utt.clone()) {
            return Err(EmbeddingError::DuplicateUtterance(utt));
        }
        let vector = rec
            .iter()
            .skip(2)
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(EmbeddingError::NonNumeric {
                    row,
                    value: v.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(SpeakerEmbedding::new(vector, &rec[1], Some(utt))?);
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<SpeakerEmbedding>, EmbeddingError> {
    read_embeddings(std::fs::File::open(path)?)
}

/// Writes embeddings in the ingestion schema with 17 significant digits.
pub fn write_embeddings(embeddings: &[SpeakerEmbedding], out: impl Write) -> Result<(), EmbeddingError> {
    let dim = embeddings.first().map_or(0, |e| e.dim());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["utterance_id".to_string(), "speaker_id".to_string()];
    header.extend((1..=dim).map(|k| format!("v{k}")));
    w.write_record(&header)?;
    for e in embeddings {
        if e.dim() != dim {
            return Err(EmbeddingError::DimensionMismatch(dim, e.dim()));
        }
        let mut row = vec![e.utterance_id.clone().unwrap_or_default(), e.speaker_id.clone()];
        row.extend(e.vector.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
