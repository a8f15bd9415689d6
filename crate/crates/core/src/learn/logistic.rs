//! Multinomial logistic regression on standardized features.

use serde::{Deserialize, Serialize};

use super::{check_trainable, Classifier};
use crate::error::{Error, Result};
use crate::features::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// L2 penalty on the weights (not the biases).
    pub lambda: f64,
    pub max_epochs: usize,
    pub grad_tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1e-4,
            max_epochs: 500,
            grad_tolerance: 1e-6,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(Error::Config("grad_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax model. `weights` is `classes x (d + 1)`, the last column being
/// the bias, applied to features standardized with `mean`/`scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub config: LogisticConfig,
    pub vocab: Vec<String>,
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub epochs: usize,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

fn scores(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    w.iter()
        .map(|wc| wc[d] + wc[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Mean negative log-likelihood plus `lambda/2 |W|^2`, and its gradient.
/// `x` must already be standardized.
pub(crate) fn loss_and_gradient(
    w: &[Vec<f64>],
    x: &[Vec<f64>],
    y: &[usize],
    lambda: f64,
) -> (f64, Vec<Vec<f64>>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut grad = vec![vec![0.0; d + 1]; w.len()];
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let mut p = scores(w, xi);
        softmax_in_place(&mut p);
        loss -= p[yi].max(f64::MIN_POSITIVE).ln();
        for (c, g) in grad.iter_mut().enumerate() {
            let r = p[c] - if c == yi { 1.0 } else { 0.0 };
            for j in 0..d {
                g[j] += r * xi[j];
            }
            g[d] += r;
        }
    }
    loss /= n;
    for (g, wc) in grad.iter_mut().zip(w) {
        for j in 0..=d {
            g[j] /= n;
            if j < d {
                g[j] += lambda * wc[j];
            }
        }
        loss += 0.5 * lambda * wc[..d].iter().map(|v| v * v).sum::<f64>();
    }
    (loss, grad)
}

fn norm(g: &[Vec<f64>]) -> f64 {
    g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn standardize(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            scale[j] += (r[j] - mean[j]).powi(2) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = s.sqrt();
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }
    (mean, scale)
}

/// Full-batch gradient descent with Armijo backtracking.
pub fn train_logistic(ds: &LabeledDataset, cfg: &LogisticConfig) -> Result<LogisticModel> {
    cfg.validate()?;
    check_trainable(ds)?;
    let (mean, scale) = standardize(ds.rows());
    let x: Vec<Vec<f64>> = ds
        .rows()
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let y = ds.label_indices();
    let d = ds.n_features();
    let mut w = vec![vec![0.0; d + 1]; ds.vocab().len()];
    let (mut loss, mut grad) = loss_and_gradient(&w, &x, &y, cfg.lambda);
    let mut step = 1.0;
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        let gn = norm(&grad);
        if gn < cfg.grad_tolerance {
            break;
        }
        epochs += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = w
                .iter()
                .zip(&grad)
                .map(|(wc, gc)| wc.iter().zip(gc).map(|(a, g)| a - step * g).collect())
                .collect();
            let (tl, tg) = loss_and_gradient(&trial, &x, &y, cfg.lambda);
            if tl <= loss - 1e-4 * step * gn * gn {
                w = trial;
                loss = tl;
                grad = tg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    Ok(LogisticModel {
        config: cfg.clone(),
        vocab: ds.vocab().to_vec(),
        feature_names: ds.feature_names().to_vec(),
        mean,
        scale,
        weights: w,
        epochs,
    })
}

impl LogisticModel {
    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        let d = self.feature_names.len();
        if self.vocab.is_empty() {
            return Err("empty vocabulary".into());
        }
        if self.mean.len() != d || self.scale.len() != d {
            return Err("standardization length mismatch".into());
        }
        if self.weights.len() != self.vocab.len() || self.weights.iter().any(|w| w.len() != d + 1) {
            return Err("weight matrix has the wrong shape".into());
        }
        Ok(())
    }
}

impl Classifier for LogisticModel {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let mut p = scores(&self.weights, &x);
        softmax_in_place(&mut p);
        p
    }
}
