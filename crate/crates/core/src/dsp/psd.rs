use serde::{Deserialize, Serialize};

use super::stft::{hann, stft_samples};
use super::DspError;
use crate::audio_io::AudioClip;

/// One-sided power spectral density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdCurve {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub segment_size: usize,
}

impl PsdCurve {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Integrated power, `sum(P) * df`.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width()
    }

    pub fn argmax(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }

    /// Frequency of the strongest bin, refined by parabolic interpolation on log power.
    pub fn dominant_frequency(&self) -> f64 {
        self.peak_frequency_in(0.0, f64::INFINITY)
    }

    /// Interpolated peak frequency restricted to `[lo_hz, hi_hz]`.
    pub fn peak_frequency_in(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let best = self
            .freqs
            .iter()
            .zip(&self.power)
            .enumerate()
            .filter(|(_, (f, _))| **f >= lo_hz && **f <= hi_hz)
            .max_by(|a, b| a.1 .1.total_cmp(b.1 .1))
            .map(|(i, _)| i);
        let Some(k) = best else { return 0.0 };
        if k == 0 || k + 1 >= self.power.len() {
            return self.freqs[k];
        }
        let tiny = 1e-300;
        let (a, b, c) = (
            self.power[k - 1].max(tiny).ln(),
            self.power[k].max(tiny).ln(),
            self.power[k + 1].max(tiny).ln(),
        );
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        self.freqs[k] + delta * self.bin_width()
    }
}

/// Welch estimate: mean-removed, Hann-windowed, 50%-overlapping segments.
///
/// Scaled as a density so that `total_power()` approximates the signal variance.
pub fn compute_psd(clip: &AudioClip, segment_size: usize) -> Result<PsdCurve, DspError> {
    if segment_size < 2 || segment_size % 2 != 0 {
        return Err(DspError::InvalidConfig(format!(
            "segment size {segment_size} must be even and at least 2"
        )));
    }
    if clip.len() < segment_size {
        return Err(DspError::ClipTooShort {
            len: clip.len(),
            window: segment_size,
        });
    }
    let hop = segment_size / 2;
    let window = hann(segment_size);
    let n_seg = super::frame_count(clip.len(), segment_size, hop);
    // Detrend each segment by its mean before windowing.
    let mut detrended = Vec::with_capacity(n_seg * segment_size);
    for m in 0..n_seg {
        let seg = &clip.samples[m * hop..m * hop + segment_size];
        let mean = seg.iter().sum::<f64>() / segment_size as f64;
        detrended.extend(seg.iter().map(|x| x - mean));
    }
    let spectra = stft_samples(&detrended, &window, segment_size, segment_size);
    let fs = clip.sample_rate as f64;
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let bins = segment_size / 2 + 1;
    let mut power = vec![0.0; bins];
    for spec in &spectra {
        for (k, c) in spec.iter().enumerate() {
            power[k] += c.norm_sqr();
        }
    }
    for (k, p) in power.iter_mut().enumerate() {
        let one_sided = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
        *p *= one_sided / (fs * win_energy * n_seg as f64);
    }
    let freqs = (0..bins).map(|k| k as f64 * fs / segment_size as f64).collect();
    Ok(PsdCurve {
        freqs,
        power,
        segment_size,
    })
}
