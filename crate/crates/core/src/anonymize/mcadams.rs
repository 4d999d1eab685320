use super::lpc::{inverse_filter, lpc_analyze, mcadams_transform_poles, poles_to_coeffs, synthesis_filter};
use super::{AnonError, McAdamsConfig};
use crate::audio_io::AudioClip;
use crate::dsp::hann;

fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Frame-wise LPC resynthesis with McAdams-transformed poles, before peak normalization.
///
/// Frames use a square-root Hann analysis/synthesis window pair scaled so the
/// overlap-added product is unity; each frame is inverse-filtered with its own
/// model and re-synthesized through the transformed all-pole filter.
pub fn mcadams_unnormalized(
    clip: &AudioClip,
    config: &McAdamsConfig,
    alpha: f64,
) -> Result<Vec<f64>, AnonError> {
    config.validate()?;
    McAdamsConfig::check_alpha(alpha)?;
    let frame_len = ms_to_samples(config.frame_ms, clip.sample_rate);
    let hop = ms_to_samples(config.hop_ms, clip.sample_rate).max(1);
    if frame_len <= config.lpc_order || hop > frame_len {
        return Err(AnonError::InvalidConfig(format!(
            "frame of {frame_len} samples cannot carry order {} at hop {hop}",
            config.lpc_order
        )));
    }
    if clip.len() < frame_len {
        return Err(AnonError::ClipTooShort {
            len: clip.len(),
            needed: frame_len,
        });
    }

    let base = hann(frame_len);
    let scale = base.iter().sum::<f64>() / hop as f64;
    let window: Vec<f64> = base.iter().map(|w| (w / scale).sqrt()).collect();

    let lead = frame_len - hop;
    let n = clip.len();
    let mut padded = vec![0.0; lead];
    padded.extend_from_slice(&clip.samples);
    padded.resize(lead + n + frame_len, 0.0);
    let mut out = vec![0.0; padded.len()];

    let mut frame = vec![0.0; frame_len];
    let mut start = 0;
    while start + frame_len <= padded.len() && start < lead + n {
        for (f, (x, w)) in frame.iter_mut().zip(padded[start..].iter().zip(&window)) {
            *f = x * w;
        }
        let model = lpc_analyze(&frame, config.lpc_order)?;
        if !model.silent {
            let residual = inverse_filter(&model.coeffs, &frame);
            let shifted = mcadams_transform_poles(&model.poles, alpha, config.angle_epsilon);
            let new_coeffs = poles_to_coeffs(&shifted)?;
            let synth = synthesis_filter(&new_coeffs, &residual);
            for (o, (s, w)) in out[start..].iter_mut().zip(synth.iter().zip(&window)) {
                *o += s * w;
            }
        }
        start += hop;
    }
    Ok(out[lead..lead + n].to_vec())
}

/// McAdams-coefficient anonymization; output is length-preserving and rescaled
/// to the input's peak.
pub fn anonymize_mcadams(
    clip: &AudioClip,
    config: &McAdamsConfig,
    alpha: f64,
) -> Result<AudioClip, AnonError> {
    let raw = mcadams_unnormalized(clip, config, alpha)?;
    Ok(clip.with_samples(peak_match(raw, clip.peak())))
}

pub(crate) fn peak_match(mut samples: Vec<f64>, target_peak: f64) -> Vec<f64> {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = target_peak / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    samples
}
