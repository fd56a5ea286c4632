//! Time-varying label distributions and the unlabeled stream drawn from them.
//!
//! The class prior at step `t` is the convex mix `(1 - a(t)) * p0 + a(t) * pT`,
//! where `a(t)` follows one of four patterns (linear ramp, rectified sine,
//! square wave, Bernoulli flips). Inputs are resampled from a fixed labeled
//! pool, so `P(x | y)` never moves.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledPool;
use crate::error::{Error, Result};
use crate::rng::{self, rng_for};

/// A probability vector over classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::structural("label distribution over zero classes"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::structural(format!(
                "label distribution has a negative or non-finite entry: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::structural(format!(
                "label distribution sums to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Self {
        let mut p = vec![0.0; num_classes];
        p[class] = 1.0;
        Self(p)
    }

    /// Normalizes non-negative counts or masses.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Degenerate("cannot normalize zero total mass".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(crate::linalg::is_on_simplex(&probs, 1e-6), "{probs:?}");
        Self(probs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.0
    }
}

impl AsRef<[f64]> for LabelDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mixing pattern for the class prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ShiftKind {
    /// `t / T`.
    Lin,
    /// `|sin(pi t / sqrt(T))|`.
    Sin,
    /// Square wave toggling every `ceil(sqrt(T) / 2)` steps.
    Squ,
    /// Two-state process flipping with probability `1 / sqrt(T)` per step.
    Ber,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 4] = [
        ShiftKind::Lin,
        ShiftKind::Sin,
        ShiftKind::Squ,
        ShiftKind::Ber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShiftKind::Lin => "lin",
            ShiftKind::Sin => "sin",
            ShiftKind::Squ => "squ",
            ShiftKind::Ber => "ber",
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lin" => Ok(ShiftKind::Lin),
            "sin" => Ok(ShiftKind::Sin),
            "squ" => Ok(ShiftKind::Squ),
            "ber" => Ok(ShiftKind::Ber),
            other => Err(Error::Config(format!(
                "unknown shift kind `{other}` (expected lin, sin, squ or ber)"
            ))),
        }
    }
}

impl TryFrom<String> for ShiftKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ShiftKind> for String {
    fn from(k: ShiftKind) -> Self {
        k.name().to_string()
    }
}

/// Block length of the square wave for horizon `T`.
pub fn square_block_len(horizon: usize) -> usize {
    ((horizon as f64).sqrt() / 2.0).ceil().max(1.0) as usize
}

/// States of a two-state chain that starts at 0 and flips with `flip_prob`
/// at each of `steps` steps. Entry `t` is the state at time `t`.
pub fn bernoulli_states(flip_prob: f64, steps: usize, seed: u64) -> Vec<bool> {
    let mut rng = rng_for(seed, rng::TAG_BERNOULLI, 0);
    let mut states = Vec::with_capacity(steps + 1);
    let mut state = false;
    states.push(state);
    for _ in 0..steps {
        if rng.random::<f64>() < flip_prob {
            state = !state;
        }
        states.push(state);
    }
    states
}

/// A label-shift schedule over `t = 0..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSchedule {
    kind: ShiftKind,
    horizon: usize,
    p0: LabelDistribution,
    p_target: LabelDistribution,
    seed: u64,
    flips: Vec<bool>,
}

impl ShiftSchedule {
    pub fn new(
        kind: ShiftKind,
        horizon: usize,
        p0: LabelDistribution,
        p_target: LabelDistribution,
        seed: u64,
    ) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::structural("shift horizon must be >= 1"));
        }
        if p0.len() != p_target.len() {
            return Err(Error::structural(format!(
                "endpoints over {} and {} classes",
                p0.len(),
                p_target.len()
            )));
        }
        let flips = match kind {
            ShiftKind::Ber => bernoulli_states(1.0 / (horizon as f64).sqrt(), horizon, seed),
            _ => Vec::new(),
        };
        Ok(Self {
            kind,
            horizon,
            p0,
            p_target,
            seed,
            flips,
        })
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start(&self) -> &LabelDistribution {
        &self.p0
    }

    pub fn target(&self) -> &LabelDistribution {
        &self.p_target
    }

    /// Mixing weight at step `t`, always within `[0, 1]`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        if t > self.horizon {
            return Err(Error::structural(format!(
                "t = {t} outside 0..={}",
                self.horizon
            )));
        }
        let horizon = self.horizon as f64;
        Ok(match self.kind {
            ShiftKind::Lin => t as f64 / horizon,
            ShiftKind::Sin => (std::f64::consts::PI * t as f64 / horizon.sqrt())
                .sin()
                .abs()
                .min(1.0),
            ShiftKind::Squ => ((t / square_block_len(self.horizon)) % 2) as f64,
            ShiftKind::Ber => {
                if self.flips[t] {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Class prior at step `t`.
    pub fn distribution(&self, t: usize) -> Result<LabelDistribution> {
        interpolate(&self.p0, &self.p_target, self.alpha(t)?)
    }
}

/// `(1 - a) * p0 + a * p_target`.
pub fn interpolate(
    p0: &LabelDistribution,
    p_target: &LabelDistribution,
    a: f64,
) -> Result<LabelDistribution> {
    if p0.len() != p_target.len() {
        return Err(Error::structural(format!(
            "interpolating distributions of length {} and {}",
            p0.len(),
            p_target.len()
        )));
    }
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::structural(format!(
            "mixing weight {a} outside [0, 1]"
        )));
    }
    if a == 0.0 {
        return Ok(p0.clone());
    }
    if a == 1.0 {
        return Ok(p_target.clone());
    }
    let mixed = p0
        .as_slice()
        .iter()
        .zip(p_target.as_slice())
        .map(|(x, y)| (1.0 - a) * x + a * y)
        .collect();
    Ok(LabelDistribution::from_vec_unchecked(mixed))
}

/// Uniform start and a one-hot target on a seeded random class.
pub fn default_endpoints(
    num_classes: usize,
    seed: u64,
) -> Result<(LabelDistribution, LabelDistribution)> {
    if num_classes < 2 {
        return Err(Error::structural("need at least 2 classes"));
    }
    let target = rng_for(seed, rng::TAG_ENDPOINT, 0).random_range(0..num_classes);
    Ok((
        LabelDistribution::uniform(num_classes),
        LabelDistribution::one_hot(num_classes, target),
    ))
}

/// One timestep of unlabeled inputs. `true_labels` is for scoring only.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamBatch {
    pub timestep: usize,
    pub inputs: Vec<Vec<f64>>,
    pub true_labels: Vec<usize>,
}

impl StreamBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Draws a batch whose labels follow `p` and whose inputs are resampled (with
/// replacement) from the pool rows of each drawn label. The result depends
/// only on `(seed, t)`.
pub fn sample_batch(
    pool: &LabeledPool,
    p: &LabelDistribution,
    batch_size: usize,
    seed: u64,
    t: usize,
) -> Result<StreamBatch> {
    if batch_size == 0 {
        return Err(Error::structural("batch size must be >= 1"));
    }
    if p.len() != pool.num_classes() {
        return Err(Error::structural(format!(
            "distribution over {} classes for a pool with {}",
            p.len(),
            pool.num_classes()
        )));
    }
    for (c, &mass) in p.as_slice().iter().enumerate() {
        if mass > 0.0 && pool.rows_of(c).is_empty() {
            return Err(Error::structural(format!("class {c} has mass but no rows")));
        }
    }
    let cumulative: Vec<f64> = p
        .as_slice()
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let last_positive = p
        .as_slice()
        .iter()
        .rposition(|&x| x > 0.0)
        .expect("mass somewhere");

    let mut rng = rng_for(seed, rng::TAG_BATCH, t as u64);
    let mut inputs = Vec::with_capacity(batch_size);
    let mut true_labels = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        let class = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last_positive);
        let rows = pool.rows_of(class);
        let row = rows[rng.random_range(0..rows.len())];
        inputs.push(pool.input(row).to_vec());
        true_labels.push(class);
    }
    Ok(StreamBatch {
        timestep: t,
        inputs,
        true_labels,
    })
}

/// A full stream `t = 1..=T` together with the priors that generated it.
#[derive(Clone, Debug)]
pub struct LabelShiftStream {
    pub kind: ShiftKind,
    pub batches: Vec<StreamBatch>,
    /// `priors[t]` for `t = 0..=T`.
    pub priors: Vec<LabelDistribution>,
}

impl LabelShiftStream {
    pub fn generate(
        pool: &LabeledPool,
        schedule: &ShiftSchedule,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let priors = (0..=schedule.horizon())
            .map(|t| schedule.distribution(t))
            .collect::<Result<Vec<_>>>()?;
        let batches = (1..=schedule.horizon())
            .map(|t| sample_batch(pool, &priors[t], batch_size, seed, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: schedule.kind(),
            batches,
            priors,
        })
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// `|P^t - P^{t-1}|_1` for `t = 1..=T`.
    pub fn prior_changes(&self) -> Vec<f64> {
        self.priors
            .windows(2)
            .map(|w| w[1].l1_distance(&w[0]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_pool, DatasetSpec};

    fn schedule(kind: ShiftKind, horizon: usize) -> ShiftSchedule {
        let (p0, pt) = default_endpoints(3, 0).unwrap();
        ShiftSchedule::new(kind, horizon, p0, pt, 11).unwrap()
    }

    #[test]
    fn linear_endpoints() {
        let s = schedule(ShiftKind::Lin, 100);
        assert_eq!(s.alpha(0).unwrap(), 0.0);
        assert_eq!(s.alpha(100).unwrap(), 1.0);
        assert_eq!(s.alpha(25).unwrap(), 0.25);
        assert!(matches!(s.alpha(101), Err(Error::Structural(_))));
    }

    #[test]
    fn sine_peak() {
        let s = schedule(ShiftKind::Sin, 100);
        assert!((s.alpha(5).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.alpha(0).unwrap(), 0.0);
        assert!(s.alpha(10).unwrap() < 1e-12);
    }

    #[test]
    fn square_blocks() {
        let s = schedule(ShiftKind::Squ, 100);
        for t in 0..5 {
            assert_eq!(s.alpha(t).unwrap(), 0.0, "t={t}");
        }
        for t in 5..10 {
            assert_eq!(s.alpha(t).unwrap(), 1.0, "t={t}");
        }
        assert_eq!(s.alpha(10).unwrap(), 0.0);
        assert_eq!(square_block_len(400), 10);
        assert_eq!(square_block_len(50), 4);
        assert_eq!(square_block_len(1), 1);
    }

    #[test]
    fn bernoulli_starts_at_zero_and_is_seeded() {
        let s = schedule(ShiftKind::Ber, 100);
        assert_eq!(s.alpha(0).unwrap(), 0.0);
        let again = schedule(ShiftKind::Ber, 100);
        for t in 0..=100 {
            let a = s.alpha(t).unwrap();
            assert!(a == 0.0 || a == 1.0);
            assert_eq!(a, again.alpha(t).unwrap());
        }
    }

    #[test]
    fn interpolation_examples() {
        let p0 = LabelDistribution::new(vec![0.5, 0.5]).unwrap();
        let pt = LabelDistribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(interpolate(&p0, &pt, 0.0).unwrap(), p0);
        assert_eq!(interpolate(&p0, &pt, 1.0).unwrap(), pt);
        assert_eq!(
            interpolate(&p0, &pt, 0.5).unwrap().as_slice(),
            &[0.75, 0.25]
        );
        let three = LabelDistribution::uniform(3);
        assert!(matches!(
            interpolate(&p0, &three, 0.5),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn endpoints() {
        let (p0, pt) = default_endpoints(4, 3).unwrap();
        assert_eq!(p0.as_slice(), &[0.25; 4]);
        assert_eq!(pt.as_slice().iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(pt.as_slice().iter().sum::<f64>(), 1.0);
        assert!(default_endpoints(1, 0).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(LabelDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(LabelDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(LabelDistribution::new(vec![]).is_err());
        assert_eq!(LabelDistribution::new(vec![0.2, 0.8]).unwrap().argmax(), 1);
        assert_eq!(LabelDistribution::uniform(3).argmax(), 0);
    }

    fn pool() -> LabeledPool {
        make_gaussian_pool(&DatasetSpec::synthetic(10, 10, 20, 4.0, 1)).unwrap()
    }

    #[test]
    fn dirac_batch_has_single_label() {
        let batch = sample_batch(&pool(), &LabelDistribution::one_hot(10, 2), 64, 5, 1).unwrap();
        assert_eq!(batch.len(), 64);
        assert!(batch.true_labels.iter().all(|&y| y == 2));
    }

    #[test]
    fn uniform_batch_frequencies_concentrate() {
        let batch = sample_batch(&pool(), &LabelDistribution::uniform(10), 10_000, 5, 3).unwrap();
        let mut counts = [0usize; 10];
        batch.true_labels.iter().for_each(|&y| counts[y] += 1);
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.1).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn batches_are_reproducible_per_timestep() {
        let pool = pool();
        let p = LabelDistribution::uniform(10);
        let a = sample_batch(&pool, &p, 32, 9, 4).unwrap();
        assert_eq!(a, sample_batch(&pool, &p, 32, 9, 4).unwrap());
        assert_ne!(
            a.true_labels,
            sample_batch(&pool, &p, 32, 9, 5).unwrap().true_labels
        );
        assert!(sample_batch(&pool, &p, 0, 9, 4).is_err());
    }

    #[test]
    fn shift_kind_names() {
        assert_eq!("SQU".parse::<ShiftKind>().unwrap(), ShiftKind::Squ);
        assert_eq!("Ber".parse::<ShiftKind>().unwrap(), ShiftKind::Ber);
        assert!("cos".parse::<ShiftKind>().is_err());
        assert_eq!(ShiftKind::Lin.to_string(), "lin");
    }

    #[test]
    fn stream_has_one_batch_per_step() {
        let (p0, pt) = default_endpoints(10, 1).unwrap();
        let s = ShiftSchedule::new(ShiftKind::Squ, 16, p0, pt, 1).unwrap();
        let stream = LabelShiftStream::generate(&pool(), &s, 8, 2).unwrap();
        assert_eq!(stream.len(), 16);
        assert_eq!(stream.priors.len(), 17);
        assert_eq!(stream.batches[0].timestep, 1);
        let changes = stream.prior_changes();
        // block length 2: changes at t = 2, 4, ...
        assert_eq!(changes[0], 0.0);
        assert!((changes[1] - 1.8).abs() < 1e-12);
    }
}
