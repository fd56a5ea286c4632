//! Label-free risk estimation.
//!
//! A confusion matrix is measured once on the labeled holdout. On each
//! unlabeled batch the histogram of hard predictions is pushed through the
//! inverted class-conditional confusion matrix (black-box shift estimation),
//! and the resulting class prior reweights the per-class holdout risks into a
//! surrogate objective for the current stream distribution.

use crate::data::LabeledPool;
use crate::error::{Error, Result};
use crate::linalg::{default_ridge, invert_ridge, project_simplex, Matrix};
use crate::model::{GradAccumulator, ModelParams};
use crate::shift::LabelDistribution;

/// Empirical joint distribution of (prediction, label) on the holdout:
/// entry `(i, j)` is `P(yhat = i, y = j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    joint: Matrix,
}

impl ConfusionMatrix {
    pub fn from_joint(joint: Matrix) -> Result<Self> {
        if !joint.is_square() {
            return Err(Error::structural("confusion matrix must be square"));
        }
        if joint.as_slice().iter().any(|&x| x < 0.0) {
            return Err(Error::structural("confusion matrix has negative entries"));
        }
        let total: f64 = joint.as_slice().iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::structural(format!(
                "confusion matrix sums to {total}, not 1"
            )));
        }
        Ok(Self { joint })
    }

    pub fn joint(&self) -> &Matrix {
        &self.joint
    }

    pub fn num_classes(&self) -> usize {
        self.joint.rows()
    }

    /// Column sums: the label marginal of the holdout.
    pub fn label_marginal(&self) -> Vec<f64> {
        let n = self.num_classes();
        (0..n)
            .map(|j| (0..n).map(|i| self.joint[(i, j)]).sum())
            .collect()
    }

    /// `P(yhat = i | y = j)`: each column divided by its label mass.
    pub fn conditional(&self) -> Result<Matrix> {
        let marginal = self.label_marginal();
        if let Some(j) = marginal.iter().position(|&m| m <= 0.0) {
            return Err(Error::InsufficientData(format!(
                "class {j} never occurs in the confusion matrix"
            )));
        }
        let n = self.num_classes();
        let mut out = self.joint.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] /= marginal[j];
            }
        }
        Ok(out)
    }
}

/// Class prior estimated without labels; always a simplex element.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskWeights(pub LabelDistribution);

impl RiskWeights {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn distribution(&self) -> &LabelDistribution {
        &self.0
    }
}

/// Counts (argmax prediction, true label) pairs on the holdout.
pub fn estimate_confusion(params: &ModelParams, holdout: &LabeledPool) -> Result<ConfusionMatrix> {
    let c = params.num_classes();
    if holdout.num_classes() != c {
        return Err(Error::structural(format!(
            "holdout has {} classes, model has {c}",
            holdout.num_classes()
        )));
    }
    if let Some(missing) = holdout.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::InsufficientData(format!(
            "class {missing} absent from holdout"
        )));
    }
    let mut joint = Matrix::zeros(c, c);
    for (x, &y) in holdout.inputs().iter().zip(holdout.labels()) {
        joint[(params.predict(x)?, y)] += 1.0;
    }
    let n = holdout.len() as f64;
    joint.as_mut_slice().iter_mut().for_each(|v| *v /= n);
    ConfusionMatrix::from_joint(joint)
}

/// Normalized histogram of hard predictions over a batch.
pub fn pseudo_label_distribution(
    params: &ModelParams,
    inputs: &[Vec<f64>],
) -> Result<LabelDistribution> {
    if inputs.is_empty() {
        return Err(Error::structural("pseudo labels of an empty batch"));
    }
    let mut counts = vec![0.0; params.num_classes()];
    for x in inputs {
        counts[params.predict(x)?] += 1.0;
    }
    LabelDistribution::from_weights(&counts)
}

/// Black-box shift estimator with the (regularized) inverse cached.
#[derive(Clone, Debug)]
pub struct ShiftEstimator {
    inverse: Matrix,
}

impl ShiftEstimator {
    /// Inverts the class-conditional confusion matrix with ridge `lambda`;
    /// `None` selects `1e-6 * trace / C`.
    pub fn new(confusion: &ConfusionMatrix, lambda: Option<f64>) -> Result<Self> {
        let conditional = confusion.conditional()?;
        let lambda = lambda.unwrap_or_else(|| default_ridge(&conditional));
        Ok(Self {
            inverse: invert_ridge(&conditional, lambda)?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.inverse.rows()
    }

    /// `project_simplex(M^{-1} pseudo)`.
    pub fn estimate(&self, pseudo: &LabelDistribution) -> Result<RiskWeights> {
        let raw = self.inverse.matvec(pseudo.as_slice())?;
        let projected = project_simplex(&raw)?;
        Ok(RiskWeights(LabelDistribution::from_vec_unchecked(
            projected,
        )))
    }
}

/// One-shot form of [`ShiftEstimator`].
pub fn bbse(
    confusion: &ConfusionMatrix,
    pseudo: &LabelDistribution,
    lambda: f64,
) -> Result<RiskWeights> {
    if pseudo.len() != confusion.num_classes() {
        return Err(Error::structural(format!(
            "pseudo distribution over {} classes, confusion over {}",
            pseudo.len(),
            confusion.num_classes()
        )));
    }
    ShiftEstimator::new(confusion, Some(lambda))?.estimate(pseudo)
}

/// Mean cross-entropy on the holdout rows of class `c` at the current parameters.
pub fn class_wise_risk(params: &ModelParams, holdout: &LabeledPool, c: usize) -> Result<f64> {
    let (risk, _) = class_risk_and_grad(params, holdout, c)?;
    Ok(risk)
}

pub fn class_risk_and_grad(
    params: &ModelParams,
    holdout: &LabeledPool,
    c: usize,
) -> Result<(f64, ModelParams)> {
    let mut weights = vec![0.0; holdout.num_classes()];
    *weights
        .get_mut(c)
        .ok_or_else(|| Error::structural(format!("class {c} out of range")))? = 1.0;
    unsupervised_risk_grad(
        params,
        holdout,
        &RiskWeights(LabelDistribution::from_vec_unchecked(weights)),
    )
}

/// `sum_c w_c R_c(theta)` and its gradient, where `R_c` is the mean holdout
/// cross-entropy of class `c`. Classes with zero weight are skipped.
pub fn unsupervised_risk_grad(
    params: &ModelParams,
    holdout: &LabeledPool,
    weights: &RiskWeights,
) -> Result<(f64, ModelParams)> {
    let w = weights.as_slice();
    if w.len() != holdout.num_classes() || w.len() != params.num_classes() {
        return Err(Error::structural(format!(
            "{} risk weights for {} holdout classes and a {}-class model",
            w.len(),
            holdout.num_classes(),
            params.num_classes()
        )));
    }
    if holdout.dim() != params.dim() {
        return Err(Error::structural("holdout and model dimensions differ"));
    }
    let mut acc = GradAccumulator::new(params.num_classes(), params.dim());
    for (c, &wc) in w.iter().enumerate() {
        if wc == 0.0 {
            continue;
        }
        let rows = holdout.rows_of(c);
        if rows.is_empty() {
            return Err(Error::InsufficientData(format!(
                "class {c} absent from holdout"
            )));
        }
        let scale = wc / rows.len() as f64;
        for &r in rows {
            acc.add(params, holdout.input(r), c, scale);
        }
    }
    Ok(acc.finish())
}
