//! Softmax-linear classifier with hand-derived cross-entropy gradients.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledPool;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{self, rng_for};
use crate::shift::{argmax, LabelDistribution};

/// Weights (`C x D`) and biases (`C`) of the classifier. Also used as the
/// gradient type, since a gradient has the same shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(num_classes, dim),
            biases: vec![0.0; num_classes],
        }
    }

    /// Weights uniform in `[-1/sqrt(D), 1/sqrt(D)]`, biases zero.
    pub fn init(num_classes: usize, dim: usize, seed: u64) -> Self {
        let mut params = Self::zeros(num_classes, dim);
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let mut rng = rng_for(seed, rng::TAG_INIT, 0);
        params
            .weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..=bound));
        params
    }

    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }

    /// Weights (row-major) followed by biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weights.as_slice().to_vec();
        out.extend_from_slice(&self.biases);
        out
    }

    pub fn from_flat(num_classes: usize, dim: usize, flat: &[f64]) -> Result<Self> {
        let nw = num_classes * dim;
        if flat.len() != nw + num_classes {
            return Err(Error::structural(format!(
                "expected {} parameters, got {}",
                nw + num_classes,
                flat.len()
            )));
        }
        Ok(Self {
            weights: Matrix::from_row_major(num_classes, dim, flat[..nw].to_vec())?,
            biases: flat[nw..].to_vec(),
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ModelParams) {
        for (a, b) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(other.weights.as_slice())
        {
            *a += scale * b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += scale * b;
        }
    }

    /// Plain gradient step `self -= lr * grad`.
    pub fn descend(&mut self, lr: f64, grad: &ModelParams) {
        if lr != 0.0 {
            self.add_scaled(-lr, grad);
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::structural(format!(
                "input of dimension {} for a model of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes())
            .map(|c| dot(self.weights.row(c), x) + self.biases[c])
            .collect()
    }

    /// Softmax output for one input.
    pub fn forward(&self, x: &[f64]) -> Result<LabelDistribution> {
        self.check_dim(x)?;
        Ok(LabelDistribution::from_vec_unchecked(
            self.probs_unchecked(x),
        ))
    }

    pub(crate) fn probs_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits_unchecked(x);
        softmax_in_place(&mut z);
        z
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(argmax(&self.logits_unchecked(x)))
    }

    /// Mean softmax output over a batch of inputs.
    pub fn batch_prediction(&self, inputs: &[Vec<f64>]) -> Result<LabelDistribution> {
        if inputs.is_empty() {
            return Err(Error::structural("batch prediction of an empty batch"));
        }
        let mut mean = vec![0.0; self.num_classes()];
        for x in inputs {
            self.check_dim(x)?;
            for (m, p) in mean.iter_mut().zip(self.probs_unchecked(x)) {
                *m += p;
            }
        }
        let n = inputs.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(LabelDistribution::from_vec_unchecked(mean))
    }

    /// Fraction of rows whose argmax prediction matches the label.
    pub fn accuracy(&self, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::structural(
                "accuracy needs matching non-empty inputs and labels",
            ));
        }
        let mut correct = 0usize;
        for (x, &y) in inputs.iter().zip(labels) {
            if self.predict(x)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }
}

/// Numerically stable softmax.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// `log(sum(exp(z))) - z[y]`, stable for large logits.
fn cross_entropy_from_logits(z: &[f64], y: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

/// Weighted mean cross-entropy `sum_i w_i CE_i / sum_i w_i` and its exact gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    inputs: &[Vec<f64>],
    labels: &[usize],
    sample_weights: &[f64],
) -> Result<(f64, ModelParams)> {
    if inputs.len() != labels.len() || inputs.len() != sample_weights.len() {
        return Err(Error::structural(format!(
            "{} inputs, {} labels, {} weights",
            inputs.len(),
            labels.len(),
            sample_weights.len()
        )));
    }
    if sample_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::structural(
            "sample weights must be finite and non-negative",
        ));
    }
    let total: f64 = sample_weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all sample weights are zero".into()));
    }
    let mut acc = GradAccumulator::new(params.num_classes(), params.dim());
    for ((x, &y), &w) in inputs.iter().zip(labels).zip(sample_weights) {
        if y >= params.num_classes() {
            return Err(Error::structural(format!("label {y} out of range")));
        }
        params.check_dim(x)?;
        acc.add(params, x, y, w / total);
    }
    Ok(acc.finish())
}

/// Running sum of scaled per-sample losses and gradients.
pub(crate) struct GradAccumulator {
    loss: f64,
    grad: ModelParams,
}

impl GradAccumulator {
    pub(crate) fn new(num_classes: usize, dim: usize) -> Self {
        Self {
            loss: 0.0,
            grad: ModelParams::zeros(num_classes, dim),
        }
    }

    /// Adds `scale * CE(x, y)` and its gradient.
    pub(crate) fn add(&mut self, params: &ModelParams, x: &[f64], y: usize, scale: f64) {
        if scale == 0.0 {
            return;
        }
        let z = params.logits_unchecked(x);
        self.loss += scale * cross_entropy_from_logits(&z, y);
        let mut p = z;
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (c, &delta) in p.iter().enumerate() {
            let coef = scale * delta;
            self.grad.biases[c] += coef;
            for (g, &xi) in self.grad.weights.row_mut(c).iter_mut().zip(x) {
                *g += coef * xi;
            }
        }
    }

    pub(crate) fn finish(self) -> (f64, ModelParams) {
        (self.loss, self.grad)
    }
}

/// Mini-batch gradient descent settings for the labeled pretraining phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.05,
            batch: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub params: ModelParams,
    pub train_accuracy: f64,
}

/// Trains on unweighted cross-entropy from a seeded initialization.
pub fn pretrain(pool: &LabeledPool, config: &PretrainConfig, seed: u64) -> Result<Pretrained> {
    if pool.is_empty() {
        return Err(Error::InsufficientData(
            "pretraining on an empty pool".into(),
        ));
    }
    if config.batch == 0 || config.lr.is_nan() || config.lr <= 0.0 {
        return Err(Error::Config(
            "pretraining needs batch >= 1 and lr > 0".into(),
        ));
    }
    let (c, d) = (pool.num_classes(), pool.dim());
    let mut params = ModelParams::init(c, d, seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_for(seed, rng::TAG_EPOCH, epoch as u64));
        for chunk in order.chunks(config.batch) {
            let scale = 1.0 / chunk.len() as f64;
            let mut acc = GradAccumulator::new(c, d);
            for &row in chunk {
                acc.add(&params, pool.input(row), pool.labels()[row], scale);
            }
            let (_, grad) = acc.finish();
            params.descend(config.lr, &grad);
        }
    }
    let train_accuracy = params.accuracy(pool.inputs(), pool.labels())?;
    Ok(Pretrained {
        params,
        train_accuracy,
    })
}

/// On-disk form of a model: JSON with dimensions, the seed that produced it,
/// and row-major weights written at full precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub num_classes: usize,
    pub dim: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "asap-lab-checkpoint/1";

impl Checkpoint {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            num_classes: params.num_classes(),
            dim: params.dim(),
            seed,
            weights: params.weights.as_slice().to_vec(),
            biases: params.biases.clone(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::structural(format!(
                "unknown checkpoint format `{}`",
                self.format
            )));
        }
        if self.biases.len() != self.num_classes {
            return Err(Error::structural("bias count does not match num_classes"));
        }
        Ok(ModelParams {
            weights: Matrix::from_row_major(self.num_classes, self.dim, self.weights.clone())?,
            biases: self.biases.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_pool, DatasetSpec};

    #[test]
    fn zero_model_is_uniform() {
        let m = ModelParams::zeros(4, 3);
        assert_eq!(m.forward(&[1.0, -2.0, 7.0]).unwrap().as_slice(), &[0.25; 4]);
    }

    #[test]
    fn bias_only_model() {
        let mut m = ModelParams::zeros(2, 1);
        m.biases = vec![2f64.ln(), 0.0];
        let p = m.forward(&[3.0]).unwrap();
        assert!((p.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forward_survives_huge_logits() {
        let mut m = ModelParams::zeros(3, 1);
        m.biases = vec![1000.0, 999.0, -1000.0];
        let p = m.forward(&[0.0]).unwrap();
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        assert!(matches!(
            ModelParams::zeros(2, 3).forward(&[1.0]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn batch_prediction_is_mean() {
        let mut m = ModelParams::zeros(2, 1);
        m.weights = Matrix::from_rows(&[vec![100.0], vec![-100.0]]).unwrap();
        let p = m.batch_prediction(&[vec![1.0], vec![-1.0]]).unwrap();
        assert!((p.as_slice()[0] - 0.5).abs() < 1e-12);
        let same = m.batch_prediction(&[vec![0.3], vec![0.3]]).unwrap();
        let single = m.forward(&[0.3]).unwrap();
        for (a, b) in same.as_slice().iter().zip(single.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(m.batch_prediction(&[]).is_err());
    }

    #[test]
    fn uniform_model_loss_is_log_c() {
        let m = ModelParams::zeros(5, 2);
        let inputs = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 0.0]];
        let (loss, _) = loss_and_grad(&m, &inputs, &[0, 3, 4], &[1.0, 2.0, 0.5]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_model_has_tiny_loss() {
        let mut m = ModelParams::zeros(3, 1);
        m.biases = vec![25.0, 0.0, 0.0];
        let (loss, _) = loss_and_grad(&m, &[vec![0.0]], &[0], &[1.0]).unwrap();
        assert!(loss <= 1e-6);
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let m = ModelParams::zeros(2, 1);
        assert!(matches!(
            loss_and_grad(&m, &[vec![0.0]], &[0], &[0.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(loss_and_grad(&m, &[vec![0.0]], &[0], &[-1.0]).is_err());
    }

    #[test]
    fn softmax_translation_invariance() {
        let mut z = vec![0.3, -1.2, 2.5];
        let mut shifted: Vec<f64> = z.iter().map(|v| v + 40.0).collect();
        softmax_in_place(&mut z);
        softmax_in_place(&mut shifted);
        for (a, b) in z.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pretraining_separable_pool() {
        let pool = make_gaussian_pool(&DatasetSpec::synthetic(3, 4, 100, 6.0, 2)).unwrap();
        let out = pretrain(
            &pool,
            &PretrainConfig {
                epochs: 30,
                lr: 0.05,
                batch: 32,
            },
            1,
        )
        .unwrap();
        assert!(out.train_accuracy >= 0.95, "{}", out.train_accuracy);
        let again = pretrain(
            &pool,
            &PretrainConfig {
                epochs: 30,
                lr: 0.05,
                batch: 32,
            },
            1,
        )
        .unwrap();
        assert_eq!(out.params, again.params);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let pool = make_gaussian_pool(&DatasetSpec::synthetic(3, 4, 10, 6.0, 2)).unwrap();
        let out = pretrain(
            &pool,
            &PretrainConfig {
                epochs: 0,
                lr: 0.1,
                batch: 8,
            },
            4,
        )
        .unwrap();
        assert_eq!(out.params, ModelParams::init(3, 4, 4));
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let params = ModelParams::init(4, 7, 99);
        let ck = Checkpoint::new(&params, 99);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let restored = back.params().unwrap();
        for (a, b) in restored.flatten().iter().zip(params.flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
