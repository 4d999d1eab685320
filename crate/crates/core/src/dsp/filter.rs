use nalgebra::{DMatrix, DVector};

use super::DspError;
use crate::audio_io::AudioClip;
use crate::poly;

/// Rational transfer function `B(z) / A(z)`, coefficients in powers of `z^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl IirFilter {
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Self {
        Self { b, a }
    }

    /// First-order Butterworth high-pass via the bilinear transform.
    pub fn high_pass(cutoff_hz: f64, sample_rate: u32) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate as f64).tan();
        let g = 1.0 / (1.0 + k);
        Self {
            b: vec![g, -g],
            a: vec![1.0, (k - 1.0) / (k + 1.0)],
        }
    }

    /// Default drift-removal filter: 20 Hz first-order high-pass.
    pub fn drift_removal(sample_rate: u32) -> Self {
        Self::high_pass(20.0, sample_rate)
    }

    /// Returns the filter with `a[0] == 1`, both vectors padded to equal length.
    fn normalized(&self) -> Result<(Vec<f64>, Vec<f64>), DspError> {
        if self.a.is_empty() || self.b.is_empty() {
            return Err(DspError::InvalidFilter("empty coefficient vector"));
        }
        if self.a.iter().chain(&self.b).any(|c| !c.is_finite()) {
            return Err(DspError::InvalidFilter("non-finite coefficient"));
        }
        let a0 = self.a[0];
        if a0 == 0.0 {
            return Err(DspError::InvalidFilter("a[0] must be non-zero"));
        }
        let n = self.a.len().max(self.b.len());
        let mut a: Vec<f64> = self.a.iter().map(|c| c / a0).collect();
        let mut b: Vec<f64> = self.b.iter().map(|c| c / a0).collect();
        a.resize(n, 0.0);
        b.resize(n, 0.0);
        Ok((b, a))
    }

    /// Fails if any pole lies on or outside the unit circle.
    pub fn check_stable(&self) -> Result<(), DspError> {
        let (_, a) = self.normalized()?;
        let worst = poly::roots(&a)?
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if worst >= 1.0 {
            return Err(DspError::UnstableFilter(worst));
        }
        Ok(())
    }

    /// Steady-state initial conditions for a unit step (transposed direct form II).
    fn step_initial_state(b: &[f64], a: &[f64]) -> Vec<f64> {
        let n = a.len();
        if n <= 1 {
            return Vec::new();
        }
        let m = n - 1;
        let mut i_minus_a = DMatrix::<f64>::identity(m, m);
        // companion(a).T: first column is -a[1..], superdiagonal ones
        for i in 0..m {
            i_minus_a[(i, 0)] += a[i + 1];
            if i + 1 < m {
                i_minus_a[(i, i + 1)] -= 1.0;
            }
        }
        let rhs = DVector::from_iterator(m, (0..m).map(|i| b[i + 1] - a[i + 1] * b[0]));
        i_minus_a
            .lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; m])
    }
}

/// Direct-form-II-transposed filtering with optional initial state.
///
/// `b` and `a` must have equal length with `a[0] == 1`.
pub fn lfilter(b: &[f64], a: &[f64], x: &[f64], initial: Option<&[f64]>) -> Vec<f64> {
    let m = a.len().saturating_sub(1);
    let mut z = match initial {
        Some(zi) => zi.to_vec(),
        None => vec![0.0; m],
    };
    let mut y = Vec::with_capacity(x.len());
    for &xn in x {
        let yn = b[0] * xn + z.first().copied().unwrap_or(0.0);
        for i in 0..m {
            let next = if i + 1 < m { z[i + 1] } else { 0.0 };
            z[i] = b[i + 1] * xn + next - a[i + 1] * yn;
        }
        y.push(yn);
    }
    y
}

/// Forward-backward filtering with odd-extension padding and steady-state
/// initial conditions, giving zero phase and squared magnitude response.
pub fn zero_phase_filter(clip: &AudioClip, filter: &IirFilter) -> Result<AudioClip, DspError> {
    filter.check_stable()?;
    let (b, a) = filter.normalized()?;
    let x = &clip.samples;
    if x.is_empty() {
        return Ok(clip.clone());
    }
    let pad = (3 * a.len()).min(x.len() - 1);
    let first = x[0];
    let last = x[x.len() - 1];
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));

    let zi = IirFilter::step_initial_state(&b, &a);
    let scaled = |v: f64| zi.iter().map(|z| z * v).collect::<Vec<_>>();
    let forward = lfilter(&b, &a, &ext, Some(&scaled(ext[0])));
    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    let start = reversed[0];
    reversed = lfilter(&b, &a, &reversed, Some(&scaled(start)));
    reversed.reverse();
    Ok(clip.with_samples(reversed[pad..pad + x.len()].to_vec()))
}
