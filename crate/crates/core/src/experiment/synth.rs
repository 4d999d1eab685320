//! Seeded synthetic corpus: each speaker is a glottal pulse source (own F0,
//! jitter, spectral tilt, breathiness) driving a vowel-dependent formant
//! filter scaled by a speaker-specific vocal-tract factor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{AgeGroup, Corpus, DatasetManifest, Gender, Label, SpeakerRecord, UtteranceRecord};
use super::ExperimentError;
use crate::anonymize::lpc::synthesis_filter;
use crate::anonymize::speaker_seed;
use crate::audio_io::AudioClip;

/// Adult reference formants (Hz) for a small vowel inventory.
const VOWELS: [[f64; 4]; 6] = [
    [270.0, 2290.0, 3010.0, 3500.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [730.0, 1090.0, 2440.0, 3500.0],
    [570.0, 840.0, 2410.0, 3500.0],
    [300.0, 870.0, 2240.0, 3500.0],
    [660.0, 1720.0, 2410.0, 3500.0],
];
const BANDWIDTHS: [f64; 4] = [60.0, 90.0, 120.0, 150.0];
const DISORDERS: [Label; 4] = [Label::Dysarthria, Label::Dysglossia, Label::Dysphonia, Label::Clp];
const NOISE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            utterances_per_speaker: 8,
            sample_rate: 16000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpeaker {
    pub record: SpeakerRecord,
    pub f0: f64,
    pub tract_scale: f64,
    pub formant_offsets: [f64; 4],
    pub bandwidth_scale: f64,
    pub tilt: f64,
    pub jitter: f64,
    pub shimmer: f64,
    pub breathiness: f64,
}

impl SynthSpeaker {
    /// Speaker `index` of a corpus; parameters depend only on `(seed, index)`.
    pub fn draw(index: usize, seed: u64) -> Self {
        let speaker_id = format!("spk{index:03}");
        let mut rng = ChaCha8Rng::seed_from_u64(speaker_seed(seed, &speaker_id, "synth"));
        let gender = if index % 2 == 0 { Gender::Female } else { Gender::Male };
        let age_group = if index % 5 == 4 { AgeGroup::Child } else { AgeGroup::Adult };
        let label = if (index / 2) % 2 == 0 {
            Label::Control
        } else {
            DISORDERS[(index / 4) % DISORDERS.len()]
        };
        let (f0_lo, f0_hi, tract) = match (age_group, gender) {
            (AgeGroup::Child, _) => (230.0, 300.0, 1.25),
            (_, Gender::Female) => (180.0, 240.0, 1.12),
            (_, Gender::Male) => (90.0, 140.0, 1.0),
        };
        let patient = label.is_patient();
        let mut offsets = [0.0; 4];
        for o in &mut offsets {
            *o = rng.random_range(-0.07..0.07);
        }
        Self {
            record: SpeakerRecord {
                speaker_id,
                gender,
                age_group,
                label,
            },
            f0: rng.random_range(f0_lo..f0_hi),
            tract_scale: tract * rng.random_range(0.92..1.08),
            formant_offsets: offsets,
            bandwidth_scale: rng.random_range(0.8..1.3),
            tilt: rng.random_range(0.6..0.9),
            jitter: if patient { rng.random_range(0.02..0.04) } else { 0.005 },
            shimmer: if patient { rng.random_range(0.1..0.2) } else { 0.03 },
            breathiness: if patient { rng.random_range(0.15..0.3) } else { 0.02 },
        }
    }

    fn formant_filter(&self, vowel: &[f64; 4], sample_rate: u32) -> Vec<f64> {
        let nyquist = sample_rate as f64 / 2.0;
        let mut a = vec![1.0];
        for k in 0..4 {
            let f = (vowel[k] * self.tract_scale * (1.0 + self.formant_offsets[k])).min(0.9 * nyquist);
            let bw = BANDWIDTHS[k] * self.bandwidth_scale;
            let r = (-PI * bw / sample_rate as f64).exp();
            let theta = 2.0 * PI * f / sample_rate as f64;
            // multiply by (1 - 2r cos θ z^-1 + r^2 z^-2)
            let sec = [1.0, -2.0 * r * theta.cos(), r * r];
            let mut next = vec![0.0; a.len() + 2];
            for (i, ai) in a.iter().enumerate() {
                for (j, sj) in sec.iter().enumerate() {
                    next[i + j] += ai * sj;
                }
            }
            a = next;
        }
        // prediction-coefficient convention: A(z) = 1 - Σ c_k z^-k
        a[1..].iter().map(|v| -v).collect()
    }

    fn vowel(&self, rng: &mut ChaCha8Rng, vowel: &[f64; 4], len: usize, sample_rate: u32) -> Vec<f64> {
        let sr = sample_rate as f64;
        let mut excitation = vec![0.0; len];
        let glide = rng.random_range(-0.08..0.08);
        let mut t = rng.random_range(0.0..sr / self.f0);
        while (t as usize) < len {
            let pos = t / len as f64;
            let f0 = self.f0 * (1.0 + glide * (pos - 0.5));
            let amp = 1.0 + self.shimmer * rng.sample::<f64, _>(StandardNormal);
            excitation[t as usize] += amp;
            let period = sr / f0 * (1.0 + self.jitter * rng.sample::<f64, _>(StandardNormal));
            t += period.max(sr / 600.0);
        }
        let mut prev = 0.0;
        let pulse_rms = (self.f0 / sr).sqrt();
        for e in excitation.iter_mut() {
            prev = *e + self.tilt * prev;
            *e = prev + self.breathiness * pulse_rms * rng.sample::<f64, _>(StandardNormal);
        }
        let mut y = synthesis_filter(&self.formant_filter(vowel, sample_rate), &excitation);
        let ramp = ((0.02 * sr) as usize).min(len / 2);
        for i in 0..ramp {
            let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
            y[i] *= g;
            y[len - 1 - i] *= g;
        }
        y
    }

    /// One utterance: the vowel inventory read in a fixed order, separated by pauses, with leading and
    /// trailing silence over a faint noise floor.
    pub fn utterance(&self, index: usize, seed: u64, sample_rate: u32) -> AudioClip {
        let sr = sample_rate as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(speaker_seed(
            seed,
            &self.record.speaker_id,
            &format!("utt{index}"),
        ));
        let ms = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo..hi) * sr / 1000.0) as usize;
        let mut samples = vec![0.0; ms(&mut rng, 150.0, 250.0)];
        for (v, vowel) in VOWELS.iter().enumerate() {
            if v > 0 {
                let gap = ms(&mut rng, 60.0, 150.0);
                samples.resize(samples.len() + gap, 0.0);
            }
            let len = ms(&mut rng, 150.0, 300.0);
            let seg = self.vowel(&mut rng, vowel, len, sample_rate);
            let rms = (seg.iter().map(|s| s * s).sum::<f64>() / len as f64).sqrt();
            let gain = if rms > 0.0 { 0.1 * rng.random_range(0.9..1.1) / rms } else { 0.0 };
            samples.extend(seg.iter().map(|s| s * gain));
        }
        let tail = ms(&mut rng, 150.0, 250.0);
        samples.resize(samples.len() + tail, 0.0);
        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let scale = if peak > 0.7 { 0.7 / peak } else { 1.0 };
        for s in samples.iter_mut() {
            *s = *s * scale + NOISE_FLOOR * rng.sample::<f64, _>(StandardNormal);
        }
        AudioClip::new(samples, sample_rate)
    }
}

/// Generates the whole corpus in memory; identical for identical configs.
pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus, ExperimentError> {
    if config.n_speakers < 2 || config.utterances_per_speaker < 2 {
        return Err(ExperimentError::InvalidArgument(format!(
            "synthetic corpus needs at least 2 speakers and 2 utterances each, got {} x {}",
            config.n_speakers, config.utterances_per_speaker
        )));
    }
    if config.sample_rate < 8000 {
        return Err(ExperimentError::InvalidArgument(format!(
            "sample rate {} too low for the formant model",
            config.sample_rate
        )));
    }
    let speakers: Vec<SynthSpeaker> = (0..config.n_speakers)
        .map(|i| SynthSpeaker::draw(i, config.seed))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..config.n_speakers)
        .flat_map(|s| (0..config.utterances_per_speaker).map(move |u| (s, u)))
        .collect();
    let audio: Vec<AudioClip> = jobs
        .par_iter()
        .map(|&(s, u)| {
            let spk = &speakers[s];
            spk.utterance(u, config.seed, config.sample_rate)
                .with_source_id(format!("{}_u{u:02}", spk.record.speaker_id))
        })
        .collect();
    let utterances = jobs
        .iter()
        .map(|&(s, u)| {
            let id = &speakers[s].record.speaker_id;
            UtteranceRecord {
                utterance_id: format!("{id}_u{u:02}"),
                speaker_id: id.clone(),
                path: format!("audio/{id}/{id}_u{u:02}.wav").into(),
            }
        })
        .collect();
    let manifest = DatasetManifest::new(speakers.into_iter().map(|s| s.record).collect(), utterances)?;
    Corpus::new(manifest, audio)
}
