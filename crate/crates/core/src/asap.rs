//! Shift-aware learning rate selection.
//!
//! The scheduler keeps only the previous batch's mean softmax output. The
//! cosine distance between that buffer and the current batch's mean output is
//! read as the amount of label shift, and mapped linearly into
//! `[eta_min, eta_max]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cosine_distance;
use crate::shift::LabelDistribution;

/// `0 < eta_min <= eta_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct LrBounds {
    eta_min: f64,
    eta_max: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    eta_min: f64,
    eta_max: f64,
}

impl TryFrom<RawBounds> for LrBounds {
    type Error = Error;

    fn try_from(raw: RawBounds) -> Result<Self> {
        LrBounds::new(raw.eta_min, raw.eta_max)
    }
}

impl LrBounds {
    pub const DEFAULT_MIN: f64 = 5e-6;
    pub const DEFAULT_MAX: f64 = 1e-4;

    pub fn new(eta_min: f64, eta_max: f64) -> Result<Self> {
        if !(eta_min > 0.0 && eta_min.is_finite() && eta_max.is_finite() && eta_min <= eta_max) {
            return Err(Error::Config(format!(
                "learning rate bounds need 0 < eta_min <= eta_max, got [{eta_min}, {eta_max}]"
            )));
        }
        Ok(Self { eta_min, eta_max })
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_min
    }

    pub fn eta_max(&self) -> f64 {
        self.eta_max
    }
}

impl Default for LrBounds {
    fn default() -> Self {
        Self {
            eta_min: Self::DEFAULT_MIN,
            eta_max: Self::DEFAULT_MAX,
        }
    }
}

/// Estimated shift magnitude in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ShiftEstimate(f64);

impl ShiftEstimate {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::structural(format!(
                "shift estimate {value} outside [0, 1]"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Mean softmax output of the previous batch.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBuffer {
    pub mean_probs: LabelDistribution,
}

impl PredictionBuffer {
    pub fn new(mean_probs: LabelDistribution) -> Self {
        Self { mean_probs }
    }
}

/// Cosine distance between the buffered and current mean predictions, clamped to `[0, 1]`.
pub fn shift_estimate(prev: &PredictionBuffer, cur: &LabelDistribution) -> Result<ShiftEstimate> {
    let d = cosine_distance(prev.mean_probs.as_slice(), cur.as_slice())?;
    Ok(ShiftEstimate(d.clamp(0.0, 1.0)))
}

/// `eta_min + e * (eta_max - eta_min)`.
pub fn learning_rate(e: ShiftEstimate, bounds: &LrBounds) -> f64 {
    let eta = bounds.eta_min + e.0 * (bounds.eta_max - bounds.eta_min);
    eta.clamp(bounds.eta_min, bounds.eta_max)
}

/// One scheduler step: estimate the shift, pick the learning rate and return
/// the buffer holding `cur` for the next step.
pub fn step(
    state: &PredictionBuffer,
    cur: &LabelDistribution,
    bounds: &LrBounds,
) -> Result<(f64, PredictionBuffer, ShiftEstimate)> {
    let e = shift_estimate(state, cur)?;
    Ok((
        learning_rate(e, bounds),
        PredictionBuffer::new(cur.clone()),
        e,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> LabelDistribution {
        LabelDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_predictions_mean_no_shift() {
        let buf = PredictionBuffer::new(dist(&[0.2, 0.3, 0.5]));
        let e = shift_estimate(&buf, &dist(&[0.2, 0.3, 0.5])).unwrap();
        assert_eq!(e.value(), 0.0);
    }

    #[test]
    fn orthogonal_predictions_mean_full_shift() {
        let buf = PredictionBuffer::new(dist(&[1.0, 0.0]));
        assert_eq!(
            shift_estimate(&buf, &dist(&[0.0, 1.0])).unwrap().value(),
            1.0
        );
    }

    #[test]
    fn half_shift_example() {
        let buf = PredictionBuffer::new(dist(&[1.0, 0.0]));
        let e = shift_estimate(&buf, &dist(&[0.5, 0.5])).unwrap().value();
        assert!((e - (1.0 - 0.5 / 0.5f64.sqrt())).abs() < 1e-12);
        assert!((e - 0.292_893_218_813_452_4).abs() < 1e-9);
    }

    #[test]
    fn learning_rate_endpoints_and_midpoint() {
        let b = LrBounds::new(5e-6, 1e-4).unwrap();
        assert_eq!(learning_rate(ShiftEstimate::new(0.0).unwrap(), &b), 5e-6);
        assert_eq!(learning_rate(ShiftEstimate::new(1.0).unwrap(), &b), 1e-4);
        assert!((learning_rate(ShiftEstimate::new(0.5).unwrap(), &b) - 5.25e-5).abs() < 1e-18);
    }

    #[test]
    fn bounds_validation() {
        assert!(LrBounds::new(0.0, 1.0).is_err());
        assert!(LrBounds::new(2.0, 1.0).is_err());
        assert!(LrBounds::new(1e-3, 1e-3).is_ok());
        assert_eq!(LrBounds::default(), LrBounds::new(5e-6, 1e-4).unwrap());
    }

    #[test]
    fn step_advances_buffer() {
        let b = LrBounds::new(1e-5, 1e-3).unwrap();
        let first = dist(&[0.1, 0.9]);
        let buf = PredictionBuffer::new(first.clone());
        let (eta, next, e) = step(&buf, &first, &b).unwrap();
        assert_eq!(eta, 1e-5);
        assert_eq!(e.value(), 0.0);
        assert_eq!(next.mean_probs, first);
        let (eta2, next2, _) = step(&next, &first, &b).unwrap();
        assert_eq!(eta2, 1e-5);
        assert_eq!(next2.mean_probs, first);
    }

    #[test]
    fn alternating_one_hots_hit_eta_max() {
        let b = LrBounds::new(1e-5, 1e-3).unwrap();
        let mut buf = PredictionBuffer::new(LabelDistribution::one_hot(3, 0));
        for t in 1..6 {
            let cur = LabelDistribution::one_hot(3, t % 2);
            let (eta, next, _) = step(&buf, &cur, &b).unwrap();
            assert_eq!(eta, 1e-3);
            buf = next;
        }
    }

    #[test]
    fn collapsed_bounds_give_constant_rate() {
        let b = LrBounds::new(3e-4, 3e-4).unwrap();
        for e in [0.0, 0.3, 1.0] {
            assert_eq!(learning_rate(ShiftEstimate::new(e).unwrap(), &b), 3e-4);
        }
    }
}
