//! Online adaptation runners. Every runner follows the same predict-then-update
//! protocol: batch `t` is scored with the state left by step `t - 1`, and only
//! afterwards may it influence the state.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asap::{self, LrBounds, PredictionBuffer};
use crate::data::LabeledPool;
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_confusion, pseudo_label_distribution, unsupervised_risk_grad, ConfusionMatrix,
    RiskWeights, ShiftEstimator,
};
use crate::model::{softmax_in_place, ModelParams};
use crate::rng::{self, rng_for};
use crate::shift::{argmax, LabelDistribution, StreamBatch};

/// Which adaptation method to run, with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MethodConfig {
    Asap {
        eta_min: f64,
        eta_max: f64,
    },
    Uogd {
        eta: f64,
    },
    Atlas {
        #[serde(default = "default_eta_grid")]
        eta_grid: Vec<f64>,
        #[serde(default = "default_meta_rate")]
        meta_rate: f64,
    },
    Fth,
    Ftfwh {
        window: usize,
    },
}

pub fn default_eta_grid() -> Vec<f64> {
    vec![1e-6, 5e-6, 1e-5, 5e-5, 1e-4]
}

fn default_meta_rate() -> f64 {
    1.0
}

impl MethodConfig {
    pub const NAMES: [&'static str; 5] = ["asap", "uogd", "atlas", "fth", "ftfwh"];

    pub fn asap(bounds: LrBounds) -> Self {
        MethodConfig::Asap {
            eta_min: bounds.eta_min(),
            eta_max: bounds.eta_max(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MethodConfig::Asap { .. } => "asap",
            MethodConfig::Uogd { .. } => "uogd",
            MethodConfig::Atlas { .. } => "atlas",
            MethodConfig::Fth => "fth",
            MethodConfig::Ftfwh { .. } => "ftfwh",
        }
    }

    /// Identifier used in file names and report columns.
    pub fn label(&self) -> String {
        match self {
            MethodConfig::Uogd { eta } => format!("uogd-{eta:e}"),
            MethodConfig::Ftfwh { window } => format!("ftfwh-{window}"),
            other => other.kind_name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            MethodConfig::Asap { eta_min, eta_max } => {
                LrBounds::new(*eta_min, *eta_max).map(|_| ())
            }
            MethodConfig::Uogd { eta } if !(eta.is_finite() && *eta >= 0.0) => {
                bad(format!("uogd eta must be >= 0, got {eta}"))
            }
            MethodConfig::Atlas {
                eta_grid,
                meta_rate,
            } => {
                if eta_grid.is_empty() {
                    bad("atlas eta_grid must not be empty".into())
                } else if eta_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    bad("atlas learning rates must be positive".into())
                } else if !(meta_rate.is_finite() && *meta_rate > 0.0) {
                    bad("atlas meta_rate must be positive".into())
                } else {
                    Ok(())
                }
            }
            MethodConfig::Ftfwh { window: 0 } => bad("ftfwh window must be >= 1".into()),
            _ => Ok(()),
        }
    }
}

/// What one method did at one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Top-1 accuracy on batch `t`, scored before any update that uses it.
    pub accuracy: f64,
    pub eta: Option<f64>,
    pub shift_e: Option<f64>,
    pub estimated_dist: Vec<f64>,
    /// Time spent in the update phase only.
    pub wall_nanos: u64,
}

/// Everything a runner needs besides the model and the stream.
#[derive(Clone, Debug)]
pub struct AdaptationContext<'a> {
    pub holdout: &'a LabeledPool,
    pub confusion: ConfusionMatrix,
    pub estimator: ShiftEstimator,
    /// Label distribution of the pretraining data.
    pub train_prior: LabelDistribution,
    /// Holdout inputs used to fill the initial prediction buffer.
    pub initial_inputs: Vec<Vec<f64>>,
}

impl<'a> AdaptationContext<'a> {
    /// Measures the confusion matrix of `params` on `holdout` and draws the
    /// initial-buffer batch (`buffer_batch` holdout rows, with replacement).
    pub fn new(
        params: &ModelParams,
        holdout: &'a LabeledPool,
        train_prior: LabelDistribution,
        buffer_batch: usize,
        seed: u64,
        ridge: Option<f64>,
    ) -> Result<Self> {
        let confusion = estimate_confusion(params, holdout)?;
        let estimator = ShiftEstimator::new(&confusion, ridge)?;
        if train_prior.len() != params.num_classes() {
            return Err(Error::structural(
                "training prior has the wrong number of classes",
            ));
        }
        let mut rng = rng_for(seed, rng::TAG_BUFFER, 0);
        let initial_inputs = (0..buffer_batch.max(1))
            .map(|_| holdout.input(rng.random_range(0..holdout.len())).to_vec())
            .collect();
        Ok(Self {
            holdout,
            confusion,
            estimator,
            train_prior,
            initial_inputs,
        })
    }

    fn estimate(&self, params: &ModelParams, batch: &StreamBatch) -> Result<RiskWeights> {
        let pseudo = pseudo_label_distribution(params, &batch.inputs)?;
        self.estimator.estimate(&pseudo)
    }
}

fn elapsed_nanos(start: Instant) -> u64 {
    start.elapsed().as_nanos().min(u128::from(u64::MAX)) as u64
}

fn batch_accuracy(params: &ModelParams, batch: &StreamBatch) -> Result<f64> {
    params.accuracy(&batch.inputs, &batch.true_labels)
}

/// Gradient descent on the unsupervised risk with a per-step learning rate
/// chosen from the shift between consecutive mean predictions.
pub fn run_asap(
    mut params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
    bounds: &LrBounds,
) -> Result<Vec<StepRecord>> {
    let mut buffer = PredictionBuffer::new(params.batch_prediction(&ctx.initial_inputs)?);
    let mut records = Vec::with_capacity(stream.len());
    for batch in stream {
        let accuracy = batch_accuracy(&params, batch)?;

        let start = Instant::now();
        let current = params.batch_prediction(&batch.inputs)?;
        let (eta, next, e) = asap::step(&buffer, &current, bounds)?;
        let weights = ctx.estimate(&params, batch)?;
        let (_, grad) = unsupervised_risk_grad(&params, ctx.holdout, &weights)?;
        params.descend(eta, &grad);
        buffer = next;
        let wall_nanos = elapsed_nanos(start);

        records.push(StepRecord {
            t: batch.timestep,
            accuracy,
            eta: Some(eta),
            shift_e: Some(e.value()),
            estimated_dist: weights.0.into_vec(),
            wall_nanos,
        });
    }
    Ok(records)
}

/// Unbiased online gradient descent with a constant learning rate.
pub fn run_uogd(
    mut params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
    eta: f64,
) -> Result<Vec<StepRecord>> {
    let mut records = Vec::with_capacity(stream.len());
    for batch in stream {
        let accuracy = batch_accuracy(&params, batch)?;

        let start = Instant::now();
        let weights = ctx.estimate(&params, batch)?;
        let (_, grad) = unsupervised_risk_grad(&params, ctx.holdout, &weights)?;
        params.descend(eta, &grad);
        let wall_nanos = elapsed_nanos(start);

        records.push(StepRecord {
            t: batch.timestep,
            accuracy,
            eta: Some(eta),
            shift_e: None,
            estimated_dist: weights.0.into_vec(),
            wall_nanos,
        });
    }
    Ok(records)
}

/// Ensemble of learners, one per learning rate, each running UOGD. Predictions
/// are the meta-weighted mean of the learners' softmax outputs; meta-weights
/// follow exponential weights on each learner's unsupervised risk.
pub fn run_atlas_lite(
    params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
    eta_grid: &[f64],
    meta_rate: f64,
) -> Result<Vec<StepRecord>> {
    run_atlas_traced(params, ctx, stream, eta_grid, meta_rate, |_| {})
}

/// [`run_atlas_lite`], calling `observe` with the meta-weights after every step.
pub fn run_atlas_traced(
    params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
    eta_grid: &[f64],
    meta_rate: f64,
    mut observe: impl FnMut(&[f64]),
) -> Result<Vec<StepRecord>> {
    if eta_grid.is_empty() {
        return Err(Error::Config(
            "atlas needs at least one learning rate".into(),
        ));
    }
    let k = eta_grid.len();
    let mut learners = vec![params; k];
    let mut meta = vec![1.0 / k as f64; k];
    let num_classes = learners[0].num_classes();
    let mut records = Vec::with_capacity(stream.len());

    for batch in stream {
        let mut correct = 0usize;
        for (x, &y) in batch.inputs.iter().zip(&batch.true_labels) {
            let mut mixed = vec![0.0; num_classes];
            for (learner, &m) in learners.iter().zip(&meta) {
                let mut z = learner.logits(x)?;
                softmax_in_place(&mut z);
                mixed.iter_mut().zip(&z).for_each(|(acc, p)| *acc += m * p);
            }
            if argmax(&mixed) == y {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / batch.len() as f64;

        let start = Instant::now();
        let mut risks = Vec::with_capacity(k);
        let mut blended = vec![0.0; num_classes];
        for ((learner, &eta), &m) in learners.iter_mut().zip(eta_grid).zip(&meta) {
            let weights = ctx.estimate(learner, batch)?;
            let (risk, grad) = unsupervised_risk_grad(learner, ctx.holdout, &weights)?;
            learner.descend(eta, &grad);
            risks.push(risk);
            blended
                .iter_mut()
                .zip(weights.as_slice())
                .for_each(|(b, w)| *b += m * w);
        }
        hedge_update(&mut meta, &risks, meta_rate);
        let wall_nanos = elapsed_nanos(start);
        observe(&meta);

        let best = argmax(&meta);
        records.push(StepRecord {
            t: batch.timestep,
            accuracy,
            eta: Some(eta_grid[best]),
            shift_e: None,
            estimated_dist: blended,
            wall_nanos,
        });
    }
    Ok(records)
}

/// `w_k <- w_k exp(-rate * loss_k)`, renormalized. Losses are shifted by their
/// minimum first, which leaves the normalized result unchanged.
pub fn hedge_update(weights: &mut [f64], losses: &[f64], rate: f64) {
    let floor = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    for (w, l) in weights.iter_mut().zip(losses) {
        *w *= (-rate * (l - floor)).exp();
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        let n = weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = 1.0 / n);
    }
}

/// Posterior correction `p_c * hist_c / prior_c`, renormalized. If the
/// correction removes all mass, `probs` is returned unchanged.
pub fn reweight_predictions(
    probs: &LabelDistribution,
    hist: &LabelDistribution,
    train_prior: &LabelDistribution,
) -> Result<LabelDistribution> {
    if probs.len() != hist.len() || probs.len() != train_prior.len() {
        return Err(Error::structural("reweighting vectors differ in length"));
    }
    if train_prior.as_slice().iter().any(|&p| p <= 0.0) {
        return Err(Error::structural("training prior has a zero entry"));
    }
    let raw: Vec<f64> = probs
        .as_slice()
        .iter()
        .zip(hist.as_slice())
        .zip(train_prior.as_slice())
        .map(|((p, h), q)| p * h / q)
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Ok(probs.clone());
    }
    Ok(LabelDistribution::from_vec_unchecked(
        raw.into_iter().map(|v| v / total).collect(),
    ))
}

/// Follow-the-history: parameters stay frozen; predictions are corrected by
/// the mean of all past label-prior estimates.
pub fn run_fth(
    params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
) -> Result<Vec<StepRecord>> {
    run_history(params, ctx, stream, None)
}

/// Follow-the-fixed-window-history: as [`run_fth`] but averaging only the
/// last `window` estimates.
pub fn run_ftfwh(
    params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
    window: usize,
) -> Result<Vec<StepRecord>> {
    if window == 0 {
        return Err(Error::Config("ftfwh window must be >= 1".into()));
    }
    run_history(params, ctx, stream, Some(window))
}

fn run_history(
    params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
    window: Option<usize>,
) -> Result<Vec<StepRecord>> {
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(stream.len());
    let mut records = Vec::with_capacity(stream.len());
    for batch in stream {
        let hist = match history.len() {
            0 => ctx.train_prior.clone(),
            n => {
                let from = window.map_or(0, |w| n.saturating_sub(w));
                let recent = &history[from..];
                let mut mean = vec![0.0; params.num_classes()];
                for est in recent {
                    mean.iter_mut().zip(est).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= recent.len() as f64);
                LabelDistribution::from_vec_unchecked(mean)
            }
        };
        let mut correct = 0usize;
        for (x, &y) in batch.inputs.iter().zip(&batch.true_labels) {
            let corrected = reweight_predictions(&params.forward(x)?, &hist, &ctx.train_prior)?;
            if corrected.argmax() == y {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / batch.len() as f64;

        let start = Instant::now();
        let weights = ctx.estimate(&params, batch)?;
        history.push(weights.as_slice().to_vec());
        let wall_nanos = elapsed_nanos(start);

        records.push(StepRecord {
            t: batch.timestep,
            accuracy,
            eta: None,
            shift_e: None,
            estimated_dist: weights.0.into_vec(),
            wall_nanos,
        });
    }
    Ok(records)
}

/// Dispatches on the method kind.
pub fn run_method(
    config: &MethodConfig,
    params: ModelParams,
    ctx: &AdaptationContext<'_>,
    stream: &[StreamBatch],
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    match config {
        MethodConfig::Asap { eta_min, eta_max } => {
            run_asap(params, ctx, stream, &LrBounds::new(*eta_min, *eta_max)?)
        }
        MethodConfig::Uogd { eta } => run_uogd(params, ctx, stream, *eta),
        MethodConfig::Atlas {
            eta_grid,
            meta_rate,
        } => run_atlas_lite(params, ctx, stream, eta_grid, *meta_rate),
        MethodConfig::Fth => run_fth(params, ctx, stream),
        MethodConfig::Ftfwh { window } => run_ftfwh(params, ctx, stream, *window),
    }
}

/// Mean of the per-step accuracies.
pub fn mean_accuracy(records: &[StepRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.accuracy).sum::<f64>() / records.len() as f64
}
