use super::stft::stft;
use super::{DspError, FeatureConfig, MelSpectrogram};
use crate::audio_io::AudioClip;

/// Power floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centers equally spaced in mel between 0 Hz and Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`
    pub weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        config.validate()?;
        let n_bins = config.n_bins();
        let sr = config.sample_rate as f64;
        let top = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let bin_hz: Vec<f64> = (0..n_bins)
            .map(|k| k as f64 * sr / config.fft_size as f64)
            .collect();
        let mut weights = Vec::with_capacity(config.n_mels);
        for m in 0..config.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row: Vec<f64> = bin_hz
                .iter()
                .map(|&f| {
                    let rise = (f - lo) / (center - lo);
                    let fall = (hi - f) / (hi - center);
                    rise.min(fall).max(0.0)
                })
                .collect();
            if row.iter().all(|&w| w == 0.0) {
                return Err(DspError::EmptyMelBand { band: m });
            }
            weights.push(row);
        }
        Ok(Self { weights })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Mel-band energies of one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Approximate linear power spectrum from mel energies.
    ///
    /// Each band's energy is spread flat over its triangle, then overlapping
    /// bands are averaged with the filter weights (normalized transpose).
    pub fn invert(&self, mel_power: &[f64]) -> Vec<f64> {
        let n_bins = self.n_bins();
        let row_sums: Vec<f64> = self.weights.iter().map(|r| r.iter().sum()).collect();
        (0..n_bins)
            .map(|k| {
                let mut num = 0.0;
                let mut den = 0.0;
                for (m, row) in self.weights.iter().enumerate() {
                    let w = row[k];
                    if w > 0.0 {
                        num += w * mel_power[m].max(0.0) / row_sums[m];
                        den += w;
                    }
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn compute_log_mel(clip: &AudioClip, config: &FeatureConfig) -> Result<MelSpectrogram, DspError> {
    let fb = MelFilterbank::new(config)?;
    let spec = stft(clip, config)?;
    let frames = spec
        .frames
        .iter()
        .map(|frame| {
            let power: Vec<f64> = frame.iter().map(|c| c.norm_sqr()).collect();
            fb.apply(&power)
                .into_iter()
                .map(|e| e.max(LOG_FLOOR).ln())
                .collect()
        })
        .collect();
    Ok(MelSpectrogram {
        frames,
        config: *config,
        source_id: clip.source_id.clone(),
    })
}
