use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DspError, FeatureConfig};
use crate::audio_io::AudioClip;

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// One-sided complex STFT, `frames x (fft_size / 2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub fft_size: usize,
    pub window_len: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|c| c.norm()).collect())
            .collect()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

pub(crate) fn stft_samples(
    samples: &[f64],
    window: &[f64],
    hop: usize,
    fft_size: usize,
) -> Vec<Vec<Complex64>> {
    let win_len = window.len();
    let n_frames = super::frame_count(samples.len(), win_len, hop);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let bins = fft_size / 2 + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    (0..n_frames)
        .map(|m| {
            let start = m * hop;
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (i, (&x, &w)) in samples[start..start + win_len].iter().zip(window).enumerate() {
                buf[i] = Complex64::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            buf[..bins].to_vec()
        })
        .collect()
}

/// Weighted overlap-add inverse with window-squared normalization.
///
/// This is the least-squares signal estimate for a (possibly inconsistent) STFT.
pub(crate) fn istft_samples(
    frames: &[Vec<Complex64>],
    window: &[f64],
    hop: usize,
    fft_size: usize,
) -> Vec<f64> {
    let win_len = window.len();
    if frames.is_empty() {
        return Vec::new();
    }
    let out_len = (frames.len() - 1) * hop + win_len;
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let ifft = FftPlanner::new().plan_fft_inverse(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let bins = fft_size / 2 + 1;
    for (m, frame) in frames.iter().enumerate() {
        buf[..bins].copy_from_slice(frame);
        // Hermitian completion; DC and Nyquist must be real.
        buf[0].im = 0.0;
        buf[bins - 1].im = 0.0;
        for k in bins..fft_size {
            buf[k] = buf[fft_size - k].conj();
        }
        ifft.process(&mut buf);
        let start = m * hop;
        for i in 0..win_len {
            let w = window[i];
            out[start + i] += w * buf[i].re / fft_size as f64;
            norm[start + i] += w * w;
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > 1e-10 { *o / n } else { 0.0 };
    }
    out
}

pub fn stft(clip: &AudioClip, config: &FeatureConfig) -> Result<Spectrogram, DspError> {
    config.validate()?;
    let window_len = config.window_samples();
    if clip.len() < window_len {
        return Err(DspError::ClipTooShort {
            len: clip.len(),
            window: window_len,
        });
    }
    let hop = config.hop_samples();
    let window = hann(window_len);
    Ok(Spectrogram {
        frames: stft_samples(&clip.samples, &window, hop, config.fft_size),
        fft_size: config.fft_size,
        window_len,
        hop,
    })
}

pub fn istft_overlap_add(
    spectrogram: &Spectrogram,
    config: &FeatureConfig,
) -> Result<AudioClip, DspError> {
    config.validate()?;
    for frame in &spectrogram.frames {
        if frame.len() != config.n_bins() {
            return Err(DspError::BinMismatch {
                got: frame.len(),
                expected: config.n_bins(),
            });
        }
    }
    let window = hann(config.window_samples());
    let samples = istft_samples(
        &spectrogram.frames,
        &window,
        config.hop_samples(),
        config.fft_size,
    );
    Ok(AudioClip {
        samples,
        sample_rate: config.sample_rate,
        source_id: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, len: usize, sr: u32) -> AudioClip {
        AudioClip::new(
            (0..len)
                .map(|n| 0.5 * (2.0 * std::f64::consts::PI * freq * n as f64 / sr as f64).sin())
                .collect(),
            sr,
        )
    }

    #[test]
    fn zero_signal_zero_bins() {
        let clip = AudioClip::new(vec![0.0; 1600], 16000);
        let s = stft(&clip, &FeatureConfig::asv(16000)).unwrap();
        assert!(s.frames.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn frame_count_720() {
        let clip = AudioClip::new(vec![0.1; 720], 16000);
        let s = stft(&clip, &FeatureConfig::asv(16000)).unwrap();
        assert_eq!(s.n_frames(), 3);
        assert_eq!(s.frames[0].len(), 257);
    }

    #[test]
    fn tone_peaks_at_bin_32() {
        let s = stft(&tone(1000.0, 4000, 16000), &FeatureConfig::asv(16000)).unwrap();
        for frame in s.magnitudes() {
            let argmax = frame
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 32);
        }
    }

    #[test]
    fn too_short() {
        let clip = AudioClip::new(vec![0.0; 399], 16000);
        assert!(matches!(
            stft(&clip, &FeatureConfig::asv(16000)),
            Err(DspError::ClipTooShort { .. })
        ));
    }

    #[test]
    fn round_trip_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let clip = AudioClip::new((0..8000).map(|_| rng.random_range(-0.9..0.9)).collect(), 16000);
        let cfg = FeatureConfig::asv(16000);
        let s = stft(&clip, &cfg).unwrap();
        let back = istft_overlap_add(&s, &cfg).unwrap();
        let win = cfg.window_samples();
        for n in win..back.len() - win {
            assert!((back.samples[n] - clip.samples[n]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_spectrogram_is_silent() {
        let cfg = FeatureConfig::asv(16000);
        let spec = Spectrogram {
            frames: vec![vec![Complex64::new(0.0, 0.0); 257]; 5],
            fft_size: 512,
            window_len: 400,
            hop: 160,
        };
        let clip = istft_overlap_add(&spec, &cfg).unwrap();
        assert_eq!(clip.len(), 4 * 160 + 400);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_frame_recovers_windowed_support() {
        let cfg = FeatureConfig::asv(16000);
        let clip = AudioClip::new((0..400).map(|n| ((n * 13) % 17) as f64 / 20.0 - 0.4).collect(), 16000);
        let s = stft(&clip, &cfg).unwrap();
        let back = istft_overlap_add(&s, &cfg).unwrap();
        // w * x / w^2 * w == x wherever the window is non-zero
        for n in 1..400 {
            assert!((back.samples[n] - clip.samples[n]).abs() < 1e-9);
        }
        assert_eq!(back.samples[0], 0.0);
    }

    #[test]
    fn bin_mismatch_rejected() {
        let cfg = FeatureConfig::asv(16000);
        let spec = Spectrogram {
            frames: vec![vec![Complex64::new(0.0, 0.0); 100]],
            fft_size: 512,
            window_len: 400,
            hop: 160,
        };
        assert!(matches!(
            istft_overlap_add(&spec, &cfg),
            Err(DspError::BinMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn parseval_per_frame(samples in prop::collection::vec(-1.0f64..1.0, 400..1200)) {
            let cfg = FeatureConfig::asv(16000);
            let clip = AudioClip::new(samples, 16000);
            let s = stft(&clip, &cfg).unwrap();
            let w = hann(400);
            prop_assert_eq!(s.n_frames(), cfg.frame_count(clip.len()));
            for (m, frame) in s.frames.iter().enumerate() {
                let time: f64 = (0..400).map(|i| (clip.samples[m * 160 + i] * w[i]).powi(2)).sum();
                let last = frame.len() - 1;
                let freq: f64 = frame.iter().enumerate().map(|(k, c)| {
                    let e = c.norm_sqr();
                    if k == 0 || k == last { e } else { 2.0 * e }
                }).sum::<f64>() / 512.0;
                prop_assert!((time - freq).abs() <= 1e-6 * time.max(1e-12));
            }
        }
    }
}
