//! Energy gating and voice-activity trimming.
//!
//! Levels are measured relative to a per-utterance noise floor: the 5th
//! percentile of window RMS, floored at 1e-6. When a clip has less than the
//! threshold's dynamic range there is no detectable silence and the floor
//! falls back to 1e-6.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;

const ABSOLUTE_FLOOR: f64 = 1e-6;
const FLOOR_PERCENTILE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VadError {
    #[error("empty clip")]
    EmptyClip,
    #[error("no speech detected")]
    NoSpeech,
    #[error("invalid VAD config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadConfig {
    pub level_threshold_db: f64,
    pub window_ms: f64,
    pub max_silence_ms: f64,
    pub smoothing_ms: f64,
    /// Step of the per-frame activity decisions.
    pub resolution_ms: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            level_threshold_db: 30.0,
            window_ms: 30.0,
            max_silence_ms: 6.0,
            smoothing_ms: 8.0,
            resolution_ms: 1.0,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        if !(self.level_threshold_db >= 0.0) {
            return Err(VadError::InvalidConfig("threshold must be non-negative"));
        }
        let durations = [
            self.window_ms,
            self.max_silence_ms,
            self.smoothing_ms,
            self.resolution_ms,
        ];
        if durations.iter().any(|d| !(*d > 0.0)) {
            return Err(VadError::InvalidConfig("durations must be positive"));
        }
        Ok(())
    }

    fn samples(ms: f64, sample_rate: u32) -> usize {
        ((ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    fn level_ratio(&self) -> f64 {
        10f64.powf(self.level_threshold_db / 20.0)
    }
}

/// Sorted, disjoint `[start, end)` sample ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentList {
    pub segments: Vec<(usize, usize)>,
}

impl SegmentList {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_samples(&self) -> usize {
        self.segments.iter().map(|(s, e)| e - s).sum()
    }

    /// Rows of `source_id,start_sample,end_sample`.
    pub fn write_csv(&self, source_id: &str, out: &mut impl Write) -> std::io::Result<()> {
        for (s, e) in &self.segments {
            writeln!(out, "{source_id},{s},{e}")?;
        }
        Ok(())
    }
}

fn rms(chunk: &[f64]) -> f64 {
    (chunk.iter().map(|x| x * x).sum::<f64>() / chunk.len() as f64).sqrt()
}

fn window_levels(samples: &[f64], window: usize) -> Vec<f64> {
    samples.chunks(window).map(rms).collect()
}

/// Reference level below which windows count as silence.
pub fn noise_floor(clip: &AudioClip, config: &VadConfig) -> f64 {
    let window = VadConfig::samples(config.window_ms, clip.sample_rate);
    let mut levels = window_levels(&clip.samples, window);
    if levels.is_empty() {
        return ABSOLUTE_FLOOR;
    }
    levels.sort_by(f64::total_cmp);
    let idx = ((FLOOR_PERCENTILE * levels.len() as f64).ceil() as usize).saturating_sub(1);
    let p5 = levels[idx];
    let peak = levels[levels.len() - 1];
    if p5 < peak / config.level_ratio() {
        p5.max(ABSOLUTE_FLOOR)
    } else {
        ABSOLUTE_FLOOR
    }
}

fn is_loud(level: f64, floor: f64, ratio: f64) -> bool {
    level > 0.0 && level >= floor * ratio * (1.0 - 1e-12)
}

fn gate_with_floor(clip: &AudioClip, floor: f64, config: &VadConfig) -> AudioClip {
    let window = VadConfig::samples(config.window_ms, clip.sample_rate);
    let ratio = config.level_ratio();
    let kept = clip
        .samples
        .chunks(window)
        .filter(|c| is_loud(rms(c), floor, ratio))
        .flatten()
        .copied()
        .collect();
    clip.with_samples(kept)
}

/// Removes analysis windows whose level is below the threshold relative to the noise floor.
pub fn gate_low_level(clip: &AudioClip, config: &VadConfig) -> Result<AudioClip, VadError> {
    config.validate()?;
    if clip.is_empty() {
        return Err(VadError::EmptyClip);
    }
    Ok(gate_with_floor(clip, noise_floor(clip, config), config))
}

fn segments_with_floor(clip: &AudioClip, floor: f64, config: &VadConfig) -> SegmentList {
    let sr = clip.sample_rate;
    let step = VadConfig::samples(config.resolution_ms, sr);
    let ratio = config.level_ratio();
    let raw: Vec<bool> = clip
        .samples
        .chunks(step)
        .map(|c| is_loud(rms(c), floor, ratio))
        .collect();
    let n = raw.len();

    // Centered moving average of the binary decisions, rounded at 0.5.
    let width = ((config.smoothing_ms / config.resolution_ms).round() as usize).max(1);
    let mut prefix = vec![0usize; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + raw[i] as usize;
    }
    let mut active: Vec<bool> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(width / 2);
            let hi = (lo + width).min(n);
            let count = prefix[hi] - prefix[lo];
            2 * count >= hi - lo
        })
        .collect();

    // Bridge short inactive runs that sit between active runs.
    let max_gap = (config.max_silence_ms / config.resolution_ms).round() as usize;
    let mut i = 0;
    while i < n {
        if active[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !active[i] {
            i += 1;
        }
        if start > 0 && i < n && i - start <= max_gap {
            active[start..i].iter_mut().for_each(|a| *a = true);
        }
    }

    let mut segments = Vec::new();
    let mut i = 0;
    while i < n {
        if !active[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && active[i] {
            i += 1;
        }
        segments.push((start * step, (i * step).min(clip.len())));
    }
    SegmentList { segments }
}

pub fn detect_voice_segments(clip: &AudioClip, config: &VadConfig) -> Result<SegmentList, VadError> {
    config.validate()?;
    if clip.is_empty() {
        return Err(VadError::EmptyClip);
    }
    Ok(segments_with_floor(clip, noise_floor(clip, config), config))
}

/// Low-level gating followed by segment trimming; the noise floor is taken
/// from the input clip for both stages.
pub fn apply_vad(clip: &AudioClip, config: &VadConfig) -> Result<AudioClip, VadError> {
    config.validate()?;
    if clip.is_empty() {
        return Err(VadError::EmptyClip);
    }
    let floor = noise_floor(clip, config);
    let gated = gate_with_floor(clip, floor, config);
    if gated.is_empty() {
        return Err(VadError::NoSpeech);
    }
    let segments = segments_with_floor(&gated, floor, config);
    if segments.is_empty() {
        return Err(VadError::NoSpeech);
    }
    let samples = segments
        .segments
        .iter()
        .flat_map(|&(s, e)| gated.samples[s..e].iter().copied())
        .collect();
    Ok(clip.with_samples(samples))
}
