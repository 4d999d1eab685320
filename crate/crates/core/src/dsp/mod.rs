//! Spectral primitives: framing, STFT/ISTFT, mel filterbanks, log-Mel features,
//! Welch PSD, zero-phase IIR filtering and Griffin-Lim phase reconstruction.

mod export;
mod filter;
mod griffin_lim;
mod mel;
mod psd;
mod stft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::RootError;

pub use export::{parse_feature_text, write_feature_json, write_feature_text};
pub use filter::{lfilter, zero_phase_filter, IirFilter};
pub use griffin_lim::{griffin_lim, griffin_lim_traced, spectral_convergence, GriffinLimOutput};
pub use mel::{compute_log_mel, hz_to_mel, mel_to_hz, MelFilterbank, LOG_FLOOR};
pub use psd::{compute_psd, PsdCurve};
pub use stft::{hann, istft_overlap_add, stft, Spectrogram};
pub(crate) use stft::{istft_samples, stft_samples};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("clip of {len} samples is shorter than one window ({window})")]
    ClipTooShort { len: usize, window: usize },
    #[error("spectrogram has {got} bins, config expects {expected}")]
    BinMismatch { got: usize, expected: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("mel band {band} is empty at this FFT resolution")]
    EmptyMelBand { band: usize },
    #[error("negative magnitude in spectrogram")]
    NegativeMagnitude,
    #[error("unstable filter: pole magnitude {0:.6}")]
    UnstableFilter(f64),
    #[error("invalid filter: {0}")]
    InvalidFilter(&'static str),
    #[error(transparent)]
    Roots(#[from] RootError),
    #[error("feature parse error: {0}")]
    Parse(String),
}

/// Framing and filterbank parameters for log-Mel extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl FeatureConfig {
    /// 40 bands, 25 ms / 10 ms, 512-point FFT: the speaker-verification front end.
    pub fn asv(sample_rate: u32) -> Self {
        Self {
            n_mels: 40,
            window_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            sample_rate,
        }
    }

    /// 80 bands, 25 ms / 10 ms, 1024-point FFT: the disorder-classifier front end.
    pub fn classifier(sample_rate: u32) -> Self {
        Self {
            n_mels: 80,
            window_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 1024,
            sample_rate,
        }
    }

    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        frame_count(len, self.window_samples(), self.hop_samples())
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let win = self.window_samples();
        let hop = self.hop_samples();
        if self.sample_rate == 0 {
            return Err(DspError::InvalidConfig("sample_rate must be positive".into()));
        }
        if self.n_mels == 0 {
            return Err(DspError::InvalidConfig("n_mels must be at least 1".into()));
        }
        if win == 0 || hop == 0 {
            return Err(DspError::InvalidConfig("window and hop must be at least one sample".into()));
        }
        if hop > win {
            return Err(DspError::InvalidConfig(format!("hop {hop} exceeds window {win}")));
        }
        if self.fft_size < win || self.fft_size % 2 != 0 {
            return Err(DspError::InvalidConfig(format!(
                "fft_size {} must be even and at least the window ({win})",
                self.fft_size
            )));
        }
        Ok(())
    }
}

/// `floor((len - window) / hop) + 1` for `len >= window`, else 0.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window || hop == 0 {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// Time-by-band log-Mel energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub frames: Vec<Vec<f64>>,
    pub config: FeatureConfig,
    pub source_id: Option<String>,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_mels(&self) -> usize {
        self.config.n_mels
    }
}
