//! Linear prediction and pole-domain manipulation.
//!
//! Coefficients follow `A(z) = 1 - sum_k a_k z^-k`, so `a` predicts
//! `x[n] ~ sum_k a_k x[n - k]`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AnonError;
use crate::poly;

/// Roots whose imaginary part is below this (relative) are treated as real.
const REAL_SNAP: f64 = 1e-7;
/// Largest radius allowed after the transform.
pub const MAX_POLE_RADIUS: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub radius: f64,
    /// Radians in (-pi, pi].
    pub angle: f64,
}

impl Pole {
    pub fn from_complex(z: Complex64) -> Self {
        let (radius, angle) = z.to_polar();
        Self { radius, angle }
    }

    pub fn to_complex(self) -> Complex64 {
        if self.is_real() {
            // keep real poles exactly real
            let sign = if self.angle.abs() > PI / 2.0 { -1.0 } else { 1.0 };
            Complex64::new(sign * self.radius, 0.0)
        } else {
            Complex64::from_polar(self.radius, self.angle)
        }
    }

    pub fn is_real(self) -> bool {
        self.angle == 0.0 || self.angle.abs() == PI
    }
}

/// Per-frame all-pole model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcFrameModel {
    pub order: usize,
    pub coeffs: Vec<f64>,
    /// Final prediction-error energy.
    pub gain: f64,
    pub poles: Vec<Pole>,
    /// Set for all-zero frames, which get a flat model.
    pub silent: bool,
}

/// Biased autocorrelation `r[0..=max_lag]`.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| {
            frame[lag.min(frame.len())..]
                .iter()
                .zip(frame)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Levinson-Durbin recursion; returns `(a_1..a_p, prediction error)`.
pub fn levinson_durbin(r: &[f64], order: usize) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; order];
    let mut err = r[0];
    if err <= 0.0 {
        return (a, 0.0);
    }
    let mut prev = vec![0.0; order];
    for i in 0..order {
        let acc = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / err;
        prev[..i].copy_from_slice(&a[..i]);
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        if err <= r[0] * 1e-15 {
            // perfectly predictable: the remaining reflection coefficients are zero
            err = err.max(0.0);
            break;
        }
    }
    (a, err)
}

pub fn lpc_analyze(frame: &[f64], order: usize) -> Result<LpcFrameModel, AnonError> {
    if order >= frame.len() {
        return Err(AnonError::OrderTooLarge {
            order,
            frame: frame.len(),
        });
    }
    let r = autocorrelation(frame, order);
    if r[0] == 0.0 {
        return Ok(LpcFrameModel {
            order,
            coeffs: vec![0.0; order],
            gain: 0.0,
            poles: Vec::new(),
            silent: true,
        });
    }
    let (coeffs, gain) = levinson_durbin(&r, order);
    let poles = find_poles(&coeffs)?;
    Ok(LpcFrameModel {
        order,
        coeffs,
        gain,
        poles,
        silent: false,
    })
}

/// Roots of `A(z)` as conjugate-paired poles.
///
/// Trailing zero coefficients lower the effective order; all-zero input has no poles.
pub fn find_poles(coeffs: &[f64]) -> Result<Vec<Pole>, AnonError> {
    let effective = coeffs.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    if effective == 0 {
        return Ok(Vec::new());
    }
    let mut desc = Vec::with_capacity(effective + 1);
    desc.push(1.0);
    desc.extend(coeffs[..effective].iter().map(|a| -a));
    let roots = poly::roots(&desc)?;
    Ok(poly::conjugate_clean(&roots, REAL_SNAP)
        .into_iter()
        .map(Pole::from_complex)
        .collect())
}

/// Raises the angle of every complex pole to `alpha`, keeping its radius.
///
/// Poles within `angle_epsilon` of 0 or pi are left alone; results are clamped
/// into `[angle_epsilon, pi - angle_epsilon]` and radii capped below 1.
pub fn mcadams_transform_poles(poles: &[Pole], alpha: f64, angle_epsilon: f64) -> Vec<Pole> {
    poles
        .iter()
        .map(|p| {
            let phi = p.angle.abs();
            let angle = if phi > angle_epsilon && phi < PI - angle_epsilon {
                p.angle.signum() * phi.powf(alpha).clamp(angle_epsilon, PI - angle_epsilon)
            } else {
                p.angle
            };
            Pole {
                radius: p.radius.min(MAX_POLE_RADIUS),
                angle,
            }
        })
        .collect()
}

fn pair_up(poles: &[Pole]) -> Result<Vec<Complex64>, AnonError> {
    const TOL: f64 = 1e-9;
    let mut out = Vec::with_capacity(poles.len());
    let mut lower: Vec<Pole> = Vec::new();
    let mut upper: Vec<Pole> = Vec::new();
    for &p in poles {
        let im = p.radius * p.angle.sin();
        if p.is_real() || im.abs() <= TOL * p.radius.max(1.0) {
            out.push(Complex64::new(p.radius * p.angle.cos().signum(), 0.0));
        } else if p.angle > 0.0 {
            upper.push(p);
        } else {
            lower.push(p);
        }
    }
    if upper.len() != lower.len() {
        return Err(AnonError::NotConjugateSymmetric);
    }
    for u in upper {
        let idx = lower
            .iter()
            .position(|l| (l.radius - u.radius).abs() <= TOL && (l.angle + u.angle).abs() <= TOL)
            .ok_or(AnonError::NotConjugateSymmetric)?;
        lower.swap_remove(idx);
        let z = Complex64::from_polar(u.radius, u.angle);
        out.push(z);
        out.push(z.conj());
    }
    Ok(out)
}

/// Expands `prod (1 - p_i z^-1)` back into prediction coefficients.
pub fn poles_to_coeffs(poles: &[Pole]) -> Result<Vec<f64>, AnonError> {
    let zs = pair_up(poles)?;
    let expanded = poly::expand(&zs);
    let mut coeffs = Vec::with_capacity(zs.len());
    for c in &expanded[1..] {
        if c.im.abs() > 1e-9 {
            return Err(AnonError::NotConjugateSymmetric);
        }
        coeffs.push(-c.re);
    }
    Ok(coeffs)
}

/// FIR `A(z)`: prediction residual of `x` with zero initial state.
pub fn inverse_filter(coeffs: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let pred: f64 = coeffs
                .iter()
                .enumerate()
                .take_while(|(k, _)| *k < n)
                .map(|(k, a)| a * x[n - 1 - k])
                .sum();
            x[n] - pred
        })
        .collect()
}

/// All-pole `1 / A(z)` with zero initial state.
pub fn synthesis_filter(coeffs: &[f64], excitation: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = Vec::with_capacity(excitation.len());
    for (n, &e) in excitation.iter().enumerate() {
        let fb: f64 = coeffs
            .iter()
            .enumerate()
            .take_while(|(k, _)| *k < n)
            .map(|(k, a)| a * y[n - 1 - k])
            .sum();
        y.push(e + fb);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sorted_complex(poles: &[Pole]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = poles.iter().map(|p| p.to_complex()).collect();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn white_frame_is_flat() {
        let mut frame = vec![0.0; 64];
        frame[0] = 0.7;
        let m = lpc_analyze(&frame, 8).unwrap();
        assert!(m.coeffs.iter().all(|&a| a == 0.0));
        assert!((m.gain - 0.49).abs() < 1e-15);
        assert!(m.poles.is_empty());
    }

    #[test]
    fn recovers_ar2() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = vec![0.0f64; 40000];
        for n in 2..x.len() {
            let e: f64 = rng.sample(StandardNormal);
            x[n] = 0.75 * x[n - 1] - 0.5 * x[n - 2] + e;
        }
        let m = lpc_analyze(&x, 2).unwrap();
        assert!((m.coeffs[0] - 0.75).abs() < 0.05);
        assert!((m.coeffs[1] + 0.5).abs() < 0.05);
        assert_eq!(m.poles.len(), 2);
    }

    #[test]
    fn order_must_be_below_length() {
        assert!(matches!(
            lpc_analyze(&[1.0, 2.0, 3.0], 3),
            Err(AnonError::OrderTooLarge { .. })
        ));
    }

    #[test]
    fn silent_frame_is_flagged() {
        let m = lpc_analyze(&[0.0; 32], 4).unwrap();
        assert!(m.silent);
        assert_eq!(m.gain, 0.0);
        assert_eq!(m.coeffs, vec![0.0; 4]);
    }

    #[test]
    fn single_real_pole() {
        let p = find_poles(&[0.9]).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].radius - 0.9).abs() < 1e-12);
        assert_eq!(p[0].angle, 0.0);
    }

    #[test]
    fn double_real_pole() {
        // 1 - z^-1 + 0.25 z^-2 = (1 - 0.5 z^-1)^2
        let p = find_poles(&[1.0, -0.25]).unwrap();
        assert_eq!(p.len(), 2);
        for pole in p {
            assert!((pole.to_complex() - Complex64::new(0.5, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_coeffs_no_poles() {
        assert!(find_poles(&[0.0, 0.0, 0.0]).unwrap().is_empty());
        assert_eq!(find_poles(&[0.5, 0.0, 0.0]).unwrap().len(), 1);
    }

    #[test]
    fn alpha_one_is_identity() {
        let poles = find_poles(&[1.2, -0.9, 0.3, -0.1]).unwrap();
        let out = mcadams_transform_poles(&poles, 1.0, 1e-3);
        assert_eq!(out, poles);
    }

    #[test]
    fn real_pole_untouched() {
        let p = [Pole { radius: 0.9, angle: 0.0 }];
        assert_eq!(mcadams_transform_poles(&p, 0.6, 1e-3), p.to_vec());
    }

    #[test]
    fn quarter_pi_at_point_eight() {
        let p = [
            Pole { radius: 0.95, angle: PI / 4.0 },
            Pole { radius: 0.95, angle: -PI / 4.0 },
        ];
        let out = mcadams_transform_poles(&p, 0.8, 1e-3);
        let oracle = (PI / 4.0).powf(0.8);
        assert!((oracle - 0.824).abs() < 1e-3);
        assert!((out[0].angle - oracle).abs() < 1e-9);
        assert!((out[1].angle + oracle).abs() < 1e-9);
        assert_eq!(out[0].radius, 0.95);
    }

    #[test]
    fn expand_double_pole() {
        let c = poles_to_coeffs(&[Pole { radius: 0.5, angle: 0.0 }, Pole { radius: 0.5, angle: 0.0 }]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!((c[1] + 0.25).abs() < 1e-15);
        assert!(poles_to_coeffs(&[]).unwrap().is_empty());
    }

    #[test]
    fn unpaired_pole_rejected() {
        let p = [Pole { radius: 0.5, angle: 0.3 }];
        assert_eq!(poles_to_coeffs(&p), Err(AnonError::NotConjugateSymmetric));
    }

    #[test]
    fn filters_invert_each_other() {
        let coeffs = [1.3, -0.8, 0.2];
        let x: Vec<f64> = (0..200).map(|n| ((n * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let back = synthesis_filter(&coeffs, &inverse_filter(&coeffs, &x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn random_stable_poles(rng: &mut ChaCha8Rng) -> Vec<Pole> {
        let pairs = rng.random_range(0..=10);
        let reals = rng.random_range(0..=2);
        let mut poles = Vec::new();
        for _ in 0..pairs {
            let radius = rng.random_range(0.05..0.999);
            let angle = rng.random_range(0.01..PI - 0.01);
            poles.push(Pole { radius, angle });
            poles.push(Pole { radius, angle: -angle });
        }
        for _ in 0..reals {
            let r: f64 = rng.random_range(-0.95..0.95);
            poles.push(Pole::from_complex(Complex64::new(r, 0.0)));
        }
        poles
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn transform_preserves_symmetry_and_stability(seed in any::<u64>(), alpha in 0.3f64..1.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poles = random_stable_poles(&mut rng);
            let out = mcadams_transform_poles(&poles, alpha, 1e-3);
            prop_assert!(out.iter().all(|p| p.radius < 1.0));
            let coeffs = poles_to_coeffs(&out).unwrap();
            prop_assert_eq!(coeffs.len(), poles.len());
        }

        #[test]
        fn poles_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poles = random_stable_poles(&mut rng);
            let coeffs = poles_to_coeffs(&poles).unwrap();
            let back = find_poles(&coeffs).unwrap();
            let a = sorted_complex(&poles);
            let b = sorted_complex(&back);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).norm() < 1e-6, "{} vs {}", x, y);
            }
        }
    }
}
