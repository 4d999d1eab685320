use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::mcadams::peak_match;
use super::{AnonError, PitchShiftConfig};
use crate::audio_io::AudioClip;
use crate::dsp::{compute_log_mel, griffin_lim, hann, FeatureConfig, MelFilterbank};

const PV_FFT: usize = 1024;
const PV_HOP: usize = 128;
const SINC_ZERO_CROSSINGS: f64 = 16.0;

fn wrap_phase(x: f64) -> f64 {
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

/// Phase-vocoder time stretch with analysis hop `PV_HOP` and synthesis hop
/// `synth_hop`. Returns the stretched signal.
fn time_stretch(samples: &[f64], synth_hop: usize) -> Vec<f64> {
    let window = hann(PV_FFT);
    let frames = crate::dsp::stft_samples(samples, &window, PV_HOP, PV_FFT);
    let bins = PV_FFT / 2 + 1;
    let omega: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * k as f64 / PV_FFT as f64)
        .collect();
    let mut phase: Vec<f64> = frames
        .first()
        .map(|f| f.iter().map(|c| c.arg()).collect())
        .unwrap_or_default();
    let mut out_frames = Vec::with_capacity(frames.len());
    for (m, frame) in frames.iter().enumerate() {
        if m > 0 {
            let prev = &frames[m - 1];
            for k in 0..bins {
                let delta = frame[k].arg() - prev[k].arg() - omega[k] * PV_HOP as f64;
                let inst = omega[k] + wrap_phase(delta) / PV_HOP as f64;
                phase[k] += synth_hop as f64 * inst;
            }
        }
        out_frames.push(
            frame
                .iter()
                .zip(&phase)
                .map(|(c, &p)| Complex64::from_polar(c.norm(), p))
                .collect::<Vec<_>>(),
        );
    }
    crate::dsp::istft_samples(&out_frames, &window, synth_hop, PV_FFT)
}

/// Band-limited interpolation of `signal` at fractional `position`.
fn sinc_sample(signal: &[f64], position: f64, cutoff: f64) -> f64 {
    let half = SINC_ZERO_CROSSINGS / cutoff;
    let lo = (position - half).ceil().max(0.0) as usize;
    let hi = ((position + half).floor() as isize).min(signal.len() as isize - 1);
    if hi < lo as isize {
        return 0.0;
    }
    let mut acc = 0.0;
    for j in lo..=hi as usize {
        let t = position - j as f64;
        let x = cutoff * t;
        let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let taper = 0.5 + 0.5 * (PI * t / half).cos();
        acc += signal[j] * cutoff * sinc * taper;
    }
    acc
}

/// Shifts pitch by `semitones` while keeping duration: phase-vocoder stretch by
/// `2^(semitones/12)` and band-limited resampling back to the input length.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip, AnonError> {
    if !(semitones.abs() <= 12.0) {
        return Err(AnonError::InvalidConfig(format!(
            "pitch shift of {semitones} semitones exceeds 12"
        )));
    }
    let n = clip.len();
    if n == 0 {
        return Ok(clip.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let synth_hop = ((PV_HOP as f64 * ratio).round() as usize).max(1);
    let stretch = synth_hop as f64 / PV_HOP as f64;

    let mut padded = vec![0.0; PV_FFT];
    padded.extend_from_slice(&clip.samples);
    padded.resize(n + 2 * PV_FFT, 0.0);
    let stretched = time_stretch(&padded, synth_hop);

    let offset = PV_FFT as f64 * stretch;
    let cutoff = (1.0 / stretch).min(1.0);
    let samples = (0..n)
        .map(|i| sinc_sample(&stretched, offset + i as f64 * stretch, cutoff))
        .collect();
    Ok(clip.with_samples(samples))
}

/// Result of the pitch-shift anonymizer with the drawn shift.
#[derive(Debug, Clone)]
pub struct PitchOutput {
    pub clip: AudioClip,
    pub semitones: f64,
}

/// Randomized pitch shift, then log-Mel analysis and Griffin-Lim resynthesis.
pub fn anonymize_pitch(
    clip: &AudioClip,
    speaker_seed: u64,
    config: &PitchShiftConfig,
) -> Result<PitchOutput, AnonError> {
    config.validate()?;
    let features = FeatureConfig::classifier(clip.sample_rate);
    if clip.len() < features.window_samples() {
        return Err(AnonError::ClipTooShort {
            len: clip.len(),
            needed: features.window_samples(),
        });
    }
    let semitones = super::sample_semitones(speaker_seed, config);
    let shifted = pitch_shift(clip, semitones)?;
    let mel = compute_log_mel(&shifted, &features)?;
    let fb = MelFilterbank::new(&features)?;
    let magnitudes: Vec<Vec<f64>> = mel
        .frames
        .iter()
        .map(|frame| {
            let power: Vec<f64> = frame.iter().map(|v| v.exp()).collect();
            fb.invert(&power).into_iter().map(f64::sqrt).collect()
        })
        .collect();
    let mut resynth = griffin_lim(&magnitudes, &features, config.vocoder_iterations)?.samples;
    resynth.resize(clip.len(), 0.0);
    Ok(PitchOutput {
        clip: clip.with_samples(peak_match(resynth, clip.peak())),
        semitones,
    })
}
