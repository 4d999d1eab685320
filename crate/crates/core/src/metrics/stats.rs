use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    /// Zero variance in both samples with different means.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sum_sq_dev(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Two-tailed Student-t tail probability P(|T| >= |t|).
fn two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<(), MetricsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(MetricsError::TooFewSamples { needed: 2, got: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
    }
    Ok(())
}

fn finish(diff: f64, se: f64, df: f64) -> TTestResult {
    if se == 0.0 {
        return if diff == 0.0 {
            TTestResult { t: 0.0, p: 1.0, df, degenerate: false }
        } else {
            TTestResult {
                t: diff.signum() * f64::INFINITY,
                p: 0.0,
                df,
                degenerate: true,
            }
        };
    }
    let t = diff / se;
    TTestResult { t, p: two_tailed_p(t, df), df, degenerate: false }
}

/// Pooled-variance two-sample t-test, two-tailed.
pub fn unpaired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    check_samples(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = na + nb - 2.0;
    let pooled = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / df;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(finish(ma - mb, se, df))
}

/// Unequal-variance (Welch) variant with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    check_samples(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let va = sum_sq_dev(a, ma) / (na - 1.0) / na;
    let vb = sum_sq_dev(b, mb) / (nb - 1.0) / nb;
    let se2 = va + vb;
    let df = if se2 > 0.0 {
        se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
    } else {
        na + nb - 2.0
    };
    Ok(finish(ma - mb, se2.sqrt(), df))
}

/// Product-moment correlation with a two-tailed p-value from the t transform.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<PearsonResult, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricsError::TooFewSamples { needed: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx = sum_sq_dev(x, mx);
    let syy = sum_sq_dev(y, my);
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ConstantInput);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (x.len() - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        two_tailed_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(PearsonResult { r, p })
}

/// Correlation coefficient alone; 0 when either input is constant or the
/// lengths differ.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.is_empty() {
        return 0.0;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx = sum_sq_dev(x, mx);
    let syy = sum_sq_dev(y, my);
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    sxy / (sxx.sqrt() * syy.sqrt())
}
