use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::stft::{hann, istft_samples, stft_samples};
use super::{DspError, FeatureConfig};
use crate::audio_io::AudioClip;

const INIT_PHASE_SEED: u64 = 0x6c_696d;

/// Reconstruction plus the per-iteration spectral-convergence trace.
#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub clip: AudioClip,
    /// Entry `i` is the error of the signal produced by iteration `i + 1`.
    pub convergence: Vec<f64>,
}

/// `|| |X| - M ||_F / || M ||_F`, with interior one-sided bins counted twice so the
/// norm matches the full two-sided spectrum.
pub fn spectral_convergence(estimate: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (e_row, t_row) in estimate.iter().zip(target) {
        let last = t_row.len().saturating_sub(1);
        for (k, (e, t)) in e_row.iter().zip(t_row).enumerate() {
            let w = if k == 0 || k == last { 1.0 } else { 2.0 };
            num += w * (e - t) * (e - t);
            den += w * t * t;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn validate(magnitudes: &[Vec<f64>], config: &FeatureConfig) -> Result<(), DspError> {
    config.validate()?;
    for row in magnitudes {
        if row.len() != config.n_bins() {
            return Err(DspError::BinMismatch {
                got: row.len(),
                expected: config.n_bins(),
            });
        }
        if row.iter().any(|&m| !(m >= 0.0)) {
            return Err(DspError::NegativeMagnitude);
        }
    }
    Ok(())
}

/// Iterative phase retrieval: alternate least-squares ISTFT and magnitude replacement.
pub fn griffin_lim_traced(
    magnitudes: &[Vec<f64>],
    config: &FeatureConfig,
    iterations: usize,
) -> Result<GriffinLimOutput, DspError> {
    validate(magnitudes, config)?;
    let iterations = iterations.max(1);
    let window = hann(config.window_samples());
    let hop = config.hop_samples();
    let n = config.fft_size;

    let mut rng = ChaCha8Rng::seed_from_u64(INIT_PHASE_SEED);
    let mut spec: Vec<Vec<Complex64>> = magnitudes
        .iter()
        .map(|row| {
            row.iter()
                .map(|&m| {
                    let phase: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    Complex64::from_polar(m, phase)
                })
                .collect()
        })
        .collect();

    let mut convergence = Vec::with_capacity(iterations);
    let mut signal = Vec::new();
    for _ in 0..iterations {
        signal = istft_samples(&spec, &window, hop, n);
        let rebuilt = stft_samples(&signal, &window, hop, n);
        let est: Vec<Vec<f64>> = rebuilt
            .iter()
            .map(|row| row.iter().map(|c| c.norm()).collect())
            .collect();
        convergence.push(spectral_convergence(&est, magnitudes));
        for ((row, target), src) in spec.iter_mut().zip(magnitudes).zip(&rebuilt) {
            for ((c, &m), s) in row.iter_mut().zip(target).zip(src) {
                let norm = s.norm();
                *c = if norm > 0.0 {
                    s * (m / norm)
                } else {
                    Complex64::new(m, 0.0)
                };
            }
        }
    }
    Ok(GriffinLimOutput {
        clip: AudioClip {
            samples: signal,
            sample_rate: config.sample_rate,
            source_id: None,
        },
        convergence,
    })
}

pub fn griffin_lim(
    magnitudes: &[Vec<f64>],
    config: &FeatureConfig,
    iterations: usize,
) -> Result<AudioClip, DspError> {
    griffin_lim_traced(magnitudes, config, iterations).map(|o| o.clip)
}
