//! Speaker anonymization: McAdams-coefficient formant shifting via LPC pole
//! rotation, and randomized pitch shifting with spectrogram resynthesis.

pub mod lpc;
mod mcadams;
mod pitch;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::dsp::DspError;
use crate::poly::RootError;

pub use lpc::{find_poles, lpc_analyze, mcadams_transform_poles, poles_to_coeffs, LpcFrameModel, Pole};
pub use mcadams::{anonymize_mcadams, mcadams_unnormalized};
pub use pitch::{anonymize_pitch, pitch_shift, PitchOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnonError {
    #[error("clip of {len} samples is shorter than one frame ({needed})")]
    ClipTooShort { len: usize, needed: usize },
    #[error("LPC order {order} needs a frame longer than {frame} samples")]
    OrderTooLarge { order: usize, frame: usize },
    #[error("pole set is not closed under conjugation")]
    NotConjugateSymmetric,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("McAdams coefficient {0} outside (0, 1.2]")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Roots(#[from] RootError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McAdamsConfig {
    /// Fixed coefficient; when `None` a per-speaker value is drawn from
    /// `[alpha_min, alpha_max]`.
    pub alpha: Option<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub lpc_order: usize,
    pub angle_epsilon: f64,
}

impl Default for McAdamsConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            alpha_min: 0.75,
            alpha_max: 0.90,
            frame_ms: 20.0,
            hop_ms: 10.0,
            lpc_order: 20,
            angle_epsilon: 1e-3,
        }
    }
}

impl McAdamsConfig {
    pub fn validate(&self) -> Result<(), AnonError> {
        if let Some(a) = self.alpha {
            Self::check_alpha(a)?;
        }
        Self::check_alpha(self.alpha_min)?;
        Self::check_alpha(self.alpha_max)?;
        if self.alpha_min > self.alpha_max {
            return Err(AnonError::InvalidConfig(format!(
                "alpha_min {} exceeds alpha_max {}",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.lpc_order < 2 {
            return Err(AnonError::InvalidConfig("lpc_order must be at least 2".into()));
        }
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0 && self.hop_ms <= self.frame_ms) {
            return Err(AnonError::InvalidConfig(format!(
                "frame {} ms / hop {} ms",
                self.frame_ms, self.hop_ms
            )));
        }
        if !(self.angle_epsilon > 0.0 && self.angle_epsilon < std::f64::consts::FRAC_PI_2) {
            return Err(AnonError::InvalidConfig(format!(
                "angle_epsilon {}",
                self.angle_epsilon
            )));
        }
        Ok(())
    }

    pub fn check_alpha(alpha: f64) -> Result<(), AnonError> {
        if alpha > 0.0 && alpha <= 1.2 {
            Ok(())
        } else {
            Err(AnonError::InvalidAlpha(alpha))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchShiftConfig {
    pub semitone_min: f64,
    pub semitone_max: f64,
    pub vocoder_iterations: usize,
}

impl Default for PitchShiftConfig {
    fn default() -> Self {
        Self {
            semitone_min: 2.0,
            semitone_max: 5.0,
            vocoder_iterations: 32,
        }
    }
}

impl PitchShiftConfig {
    pub fn validate(&self) -> Result<(), AnonError> {
        if self.semitone_min > 0.0 && self.semitone_min <= self.semitone_max && self.semitone_max <= 12.0 {
            Ok(())
        } else {
            Err(AnonError::InvalidConfig(format!(
                "semitone bounds [{}, {}] must satisfy 0 < min <= max <= 12",
                self.semitone_min, self.semitone_max
            )))
        }
    }
}

/// Derives the RNG seed for one speaker. `stream` separates independent draws
/// for the same speaker (e.g. test-side and enrollment-side anonymization).
pub fn speaker_seed(global_seed: u64, speaker_id: &str, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(speaker_id.as_bytes());
    h.update([0u8]);
    h.update(stream.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Uniform draw in `[alpha_min, alpha_max]`.
pub fn sample_alpha(speaker_seed: u64, config: &McAdamsConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(speaker_seed);
    if config.alpha_max > config.alpha_min {
        rng.random_range(config.alpha_min..=config.alpha_max)
    } else {
        config.alpha_min
    }
}

/// Signed shift: magnitude uniform in the configured bounds, sign by fair coin.
pub fn sample_semitones(speaker_seed: u64, config: &PitchShiftConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(speaker_seed);
    let mag = if config.semitone_max > config.semitone_min {
        rng.random_range(config.semitone_min..=config.semitone_max)
    } else {
        config.semitone_min
    };
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Sidecar record written next to every anonymized file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: Option<String>,
    pub method: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub speaker_seed: u64,
    pub toolkit_version: String,
    pub pipeline_variant: String,
}

/// Which anonymizer to run over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AnonymizerSpec {
    Identity,
    #[serde(rename = "mcadams")]
    McAdams(McAdamsConfig),
    Pitch(PitchShiftConfig),
}

impl AnonymizerSpec {
    pub fn validate(&self) -> Result<(), AnonError> {
        match self {
            Self::Identity => Ok(()),
            Self::McAdams(c) => c.validate(),
            Self::Pitch(c) => c.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::McAdams(_) => "mcadams",
            Self::Pitch(_) => "pitch",
        }
    }

    /// Anonymizes one utterance of `speaker_id`. Draws depend only on
    /// `(global_seed, speaker_id, stream)`.
    pub fn apply(
        &self,
        clip: &AudioClip,
        global_seed: u64,
        speaker_id: &str,
        stream: &str,
    ) -> Result<(AudioClip, Provenance), AnonError> {
        let seed = speaker_seed(global_seed, speaker_id, stream);
        let (out, params, variant) = match self {
            Self::Identity => (clip.clone(), serde_json::json!({}), "identity"),
            Self::McAdams(cfg) => {
                let alpha = cfg.alpha.unwrap_or_else(|| sample_alpha(seed, cfg));
                let out = anonymize_mcadams(clip, cfg, alpha)?;
                let params = serde_json::json!({
                    "alpha": alpha,
                    "frame_ms": cfg.frame_ms,
                    "hop_ms": cfg.hop_ms,
                    "lpc_order": cfg.lpc_order,
                });
                (out, params, "lpc-pole-rotation")
            }
            Self::Pitch(cfg) => {
                let PitchOutput { clip: out, semitones } = anonymize_pitch(clip, seed, cfg)?;
                let params = serde_json::json!({
                    "semitones": semitones,
                    "vocoder_iterations": cfg.vocoder_iterations,
                });
                (out, params, "phase-vocoder+griffin-lim (no noise/denoise stage)")
            }
        };
        let provenance = Provenance {
            source_id: clip.source_id.clone(),
            method: self.name().into(),
            params,
            seed: global_seed,
            speaker_seed: seed,
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            pipeline_variant: variant.into(),
        };
        Ok((out, provenance))
    }
}
