//! Polynomial root finding.
//!
//! Simultaneous Aberth-Ehrlich iteration with Newton polishing, falling back to
//! companion-matrix eigenvalues when the iteration stalls.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use thiserror::Error;

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-14;
const ACCEPT_BACKWARD_ERROR: f64 = 1e-10;
const MAX_BACKWARD_ERROR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("root refinement did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("non-finite polynomial coefficient")]
    NonFinite,
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(coeffs[0], 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Backward error of `z` as a root: |p(z)| / sum |c_k| |z|^k.
pub fn backward_error(coeffs: &[f64], z: Complex64) -> f64 {
    let (p, _) = horner(coeffs, z);
    let r = z.norm();
    let scale = coeffs.iter().fold(0.0, |acc, c| acc * r + c.abs());
    if scale == 0.0 {
        0.0
    } else {
        p.norm() / scale
    }
}

fn max_backward_error(coeffs: &[f64], roots: &[Complex64]) -> f64 {
    roots
        .iter()
        .map(|&z| backward_error(coeffs, z))
        .fold(0.0, f64::max)
}

fn aberth(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let lead = coeffs[0];
    let radius = (1..=n)
        .map(|k| (coeffs[k] / lead).abs().powf(1.0 / k as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let center = -coeffs[1] / (n as f64 * lead);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::new(center, 0.0) + Complex64::from_polar(radius, theta)
        })
        .collect();

    let mut done = vec![false; n];
    for _ in 0..MAX_ITERATIONS {
        for k in 0..n {
            if done[k] {
                continue;
            }
            let (p, dp) = horner(coeffs, z[k]);
            if p.norm() == 0.0 {
                done[k] = true;
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| (z[k] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[k] -= step;
                done[k] = step.norm() <= STEP_TOLERANCE * (1.0 + z[k].norm());
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    z
}

fn companion_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j + 1] / coeffs[0];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

fn polish(coeffs: &[f64], roots: &mut [Complex64]) {
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(coeffs, *z);
            if p.norm() == 0.0 || dp.norm() == 0.0 {
                break;
            }
            let candidate = *z - p / dp;
            if candidate.is_finite()
                && backward_error(coeffs, candidate) < backward_error(coeffs, *z)
            {
                *z = candidate;
            } else {
                break;
            }
        }
    }
}

/// All complex roots of a real polynomial given highest-degree coefficient first.
///
/// Leading zeros are dropped; trailing zeros contribute roots at the origin.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex64>, RootError> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(RootError::NonFinite);
    }
    let start = coeffs.iter().position(|&c| c != 0.0).unwrap_or(coeffs.len());
    let trimmed = &coeffs[start..];
    if trimmed.len() <= 1 {
        return Ok(Vec::new());
    }
    let nonzero_end = trimmed.iter().rposition(|&c| c != 0.0).unwrap() + 1;
    let zero_roots = trimmed.len() - nonzero_end;
    let core = &trimmed[..nonzero_end];

    let mut found = Vec::new();
    if core.len() == 2 {
        found.push(Complex64::new(-core[1] / core[0], 0.0));
    } else if core.len() > 2 {
        let mut z = aberth(core);
        polish(core, &mut z);
        if max_backward_error(core, &z) > ACCEPT_BACKWARD_ERROR {
            let mut fallback = companion_roots(core);
            polish(core, &mut fallback);
            if max_backward_error(core, &fallback) < max_backward_error(core, &z) {
                z = fallback;
            }
        }
        let residual = max_backward_error(core, &z);
        if !(residual <= MAX_BACKWARD_ERROR) {
            return Err(RootError::NonConvergence { residual });
        }
        found = z;
    }
    found.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(zero_roots));
    Ok(found)
}

/// Snaps near-real roots onto the real axis and makes complex roots exact conjugate pairs.
///
/// Output order: real roots ascending, then pairs `(z, conj z)` with `im z > 0`, sorted by angle.
pub fn conjugate_clean(roots: &[Complex64], snap_tol: f64) -> Vec<Complex64> {
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &z in roots {
        if z.im.abs() <= snap_tol * z.norm().max(1.0) {
            reals.push(z.re);
        } else if z.im > 0.0 {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    // Unbalanced halves can only come from an inaccurate root set; demote extras to real.
    let mut pairs = Vec::new();
    for u in upper {
        let best = lower
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1.conj() - u)
                    .norm()
                    .total_cmp(&(b.1.conj() - u).norm())
            })
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                let l = lower.swap_remove(i);
                pairs.push((u + l.conj()) * 0.5);
            }
            None => reals.push(u.re),
        }
    }
    reals.extend(lower.iter().map(|z| z.re));
    reals.sort_by(f64::total_cmp);
    pairs.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.norm().total_cmp(&b.norm())));

    let mut out: Vec<Complex64> = reals.into_iter().map(|r| Complex64::new(r, 0.0)).collect();
    for p in pairs {
        out.push(p);
        out.push(p.conj());
    }
    out
}

/// Expands `prod (x - r_i)` into monic coefficients, highest degree first.
pub fn expand(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        c.push(Complex64::new(0.0, 0.0));
        for k in (1..c.len()).rev() {
            let prev = c[k - 1];
            c[k] -= r * prev;
        }
    }
    c
}
