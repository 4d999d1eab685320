use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
            l2: 1e-3,
        }
    }
}

/// Class-weighted logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub epochs: usize,
    /// Weighted mean loss after each epoch.
    pub loss_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^-z) computed without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

pub fn train_reference_classifier(
    features: &[Vec<f64>],
    labels: &[bool],
    seed: u64,
    config: &ClassifierConfig,
) -> Result<ReferenceClassifier, ExperimentError> {
    if features.len() != labels.len() {
        return Err(ExperimentError::InvalidArgument(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ExperimentError::SingleClass("classifier training set".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim || f.iter().any(|v| !v.is_finite())) {
        return Err(ExperimentError::InvalidArgument("ragged or non-finite feature rows".into()));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; dim];
    for f in features {
        for ((s, v), m) in scale.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    scale.iter_mut().for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let class_w = |l: bool| if l { n / (2.0 * n_pos as f64) } else { n / (2.0 * n_neg as f64) };
    let sample_w: Vec<f64> = labels.iter().map(|&l| class_w(l)).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for &i in chunk {
                let z = b + w.iter().zip(&x[i]).map(|(a, c)| a * c).sum::<f64>();
                let g = sample_w[i] * (sigmoid(z) - y[i]);
                for (gk, xk) in gw.iter_mut().zip(&x[i]) {
                    *gk += g * xk;
                }
                gb += g;
            }
            let m = chunk.len() as f64;
            for (wk, gk) in w.iter_mut().zip(&gw) {
                *wk -= config.learning_rate * (gk / m + config.l2 * *wk);
            }
            b -= config.learning_rate * gb / m;
        }
        let loss = x
            .iter()
            .zip(&y)
            .zip(&sample_w)
            .map(|((xi, yi), sw)| {
                let z = b + w.iter().zip(xi).map(|(a, c)| a * c).sum::<f64>();
                sw * if *yi > 0.5 { softplus_neg(z) } else { softplus_neg(-z) }
            })
            .sum::<f64>()
            / n;
        loss_trace.push(loss);
    }
    Ok(ReferenceClassifier {
        weights: w,
        bias: b,
        feature_mean: mean,
        feature_scale: scale,
        epochs: config.epochs,
        loss_trace,
    })
}

impl ReferenceClassifier {
    /// Positive-class probability.
    pub fn score(&self, features: &[f64]) -> f64 {
        let z = self.bias
            + features
                .iter()
                .zip(&self.feature_mean)
                .zip(&self.feature_scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>();
        sigmoid(z)
    }
}
