//! PCM-16 WAV reading and writing.
//!
//! Only 16-bit integer PCM is accepted. Multichannel input is averaged down to
//! mono on read; writes are always mono.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

const PCM_SCALE: f64 = 32768.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("not a RIFF/WAVE file")]
    NotWave,
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("truncated data chunk: header declares {declared} bytes, {available} present")]
    TruncatedData { declared: usize, available: usize },
    #[error("malformed header: {0}")]
    Malformed(&'static str),
    #[error("empty clip")]
    EmptyClip,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: Option<String>,
}

impl AudioClip {
    /// Builds a clip, replacing non-finite samples with 0 and clamping to [-1, 1].
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        let samples = samples
            .into_iter()
            .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        Self {
            samples,
            sample_rate,
            source_id: None,
        }
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Returns a clip with the same rate and id but new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }
}

struct Format {
    channels: u16,
    sample_rate: u32,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Malformed("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    // WAVE_FORMAT_EXTENSIBLE stores the real tag in the sub-format GUID.
    if tag == 0xFFFE && body.len() >= 26 {
        tag = u16_at(body, 24);
    }
    if tag != 1 {
        return Err(AudioError::Unsupported(format!("format tag {tag} (PCM only)")));
    }
    if bits != 16 {
        return Err(AudioError::Unsupported(format!("{bits}-bit samples (16-bit only)")));
    }
    if channels == 0 {
        return Err(AudioError::Malformed("zero channels"));
    }
    if sample_rate == 0 {
        return Err(AudioError::InvalidSampleRate(0));
    }
    Ok(Format {
        channels,
        sample_rate,
    })
}

/// Decodes an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::NotWave);
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                let end = body_start
                    .checked_add(size)
                    .filter(|&e| e <= bytes.len())
                    .ok_or(AudioError::Malformed("fmt chunk overruns file"))?;
                format = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                let fmt = format
                    .as_ref()
                    .ok_or(AudioError::Malformed("data chunk before fmt chunk"))?;
                let available = bytes.len() - body_start;
                let block = 2 * fmt.channels as usize;
                if size > available || size % block != 0 {
                    return Err(AudioError::TruncatedData {
                        declared: size,
                        available,
                    });
                }
                let data = &bytes[body_start..body_start + size];
                let channels = fmt.channels as usize;
                let samples = data
                    .chunks_exact(block)
                    .map(|frame| {
                        let sum: f64 = frame
                            .chunks_exact(2)
                            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / PCM_SCALE)
                            .sum();
                        sum / channels as f64
                    })
                    .collect();
                return Ok(AudioClip::new(samples, fmt.sample_rate));
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    if format.is_none() {
        Err(AudioError::Malformed("no fmt chunk"))
    } else {
        Err(AudioError::Malformed("no data chunk"))
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(AudioError::MissingFile(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let mut clip = decode_wav(&bytes)?;
    if let Some(stem) = path.file_stem() {
        clip.source_id = Some(stem.to_string_lossy().into_owned());
    }
    Ok(clip)
}

/// Quantizes one sample to PCM-16 with clamping.
pub fn quantize(sample: f64) -> i16 {
    let s = if sample.is_finite() { sample } else { 0.0 };
    (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Encodes a clip as a mono PCM-16 RIFF/WAVE image.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>, AudioError> {
    if clip.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidSampleRate(0));
    }
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = encode_wav(clip)?;
    fs::write(path, bytes)?;
    Ok(())
}
