use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::RunConfig;
use crate::data::{split_pool, LabeledPool};
use crate::error::{Error, Result};
use crate::methods::{run_method, AdaptationContext, MethodConfig, StepRecord};
use crate::model::{pretrain, ModelParams};
use crate::shift::{
    default_endpoints, LabelDistribution, LabelShiftStream, ShiftKind, ShiftSchedule,
};

/// Per-seed state shared by every cell with that seed: the train/holdout
/// split and the pretrained model.
#[derive(Clone, Debug)]
pub struct SeedSetup {
    pub seed: u64,
    pub train: LabeledPool,
    pub holdout: LabeledPool,
    pub params: ModelParams,
    pub train_accuracy: f64,
    pub train_prior: LabelDistribution,
}

impl SeedSetup {
    pub fn new(pool: &LabeledPool, config: &RunConfig, seed: u64) -> Result<Self> {
        let (train, holdout) = split_pool(pool, config.holdout_fraction, seed)?;
        let pre = pretrain(&train, &config.pretrain, seed)?;
        let train_prior = LabelDistribution::new(train.class_prior())?;
        Ok(Self {
            seed,
            train,
            holdout,
            params: pre.params,
            train_accuracy: pre.train_accuracy,
            train_prior,
        })
    }

    pub fn context(&self, config: &RunConfig) -> Result<AdaptationContext<'_>> {
        AdaptationContext::new(
            &self.params,
            &self.holdout,
            self.train_prior.clone(),
            config.batch_size,
            self.seed,
            config.ridge,
        )
    }
}

/// A built dataset plus one [`SeedSetup`] per configured seed.
#[derive(Debug)]
pub struct Lab {
    pub config: RunConfig,
    pub pool: LabeledPool,
    setups: BTreeMap<u64, Result<SeedSetup, String>>,
}

impl Lab {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let pool = config.dataset.build()?;
        let setups = config
            .seeds
            .par_iter()
            .map(|&seed| {
                (
                    seed,
                    SeedSetup::new(&pool, &config, seed).map_err(|e| e.to_string()),
                )
            })
            .collect();
        Ok(Self {
            config,
            pool,
            setups,
        })
    }

    pub fn setup(&self, seed: u64) -> Result<&SeedSetup> {
        match self.setups.get(&seed) {
            Some(Ok(s)) => Ok(s),
            Some(Err(msg)) => Err(Error::InsufficientData(format!(
                "seed {seed} setup failed: {msg}"
            ))),
            None => Err(Error::Config(format!("seed {seed} is not configured"))),
        }
    }

    /// The stream for one (shift, seed) cell; identical for every method.
    pub fn stream(&self, shift: ShiftKind, seed: u64) -> Result<LabelShiftStream> {
        let (p0, pt) = default_endpoints(self.pool.num_classes(), seed)?;
        let schedule = ShiftSchedule::new(shift, self.config.horizon, p0, pt, seed)?;
        LabelShiftStream::generate(&self.pool, &schedule, self.config.batch_size, seed)
    }

    /// Runs one method (rates already scaled) on one stream.
    pub fn run_on(
        &self,
        method: &MethodConfig,
        seed: u64,
        stream: &LabelShiftStream,
    ) -> Result<Vec<StepRecord>> {
        let setup = self.setup(seed)?;
        let ctx = setup.context(&self.config)?;
        run_method(method, setup.params.clone(), &ctx, &stream.batches)
    }

    /// Runs one configured method (rates in reference units) on one cell.
    pub fn run_cell(
        &self,
        shift: ShiftKind,
        method: &MethodConfig,
        seed: u64,
    ) -> Result<Vec<StepRecord>> {
        let stream = self.stream(shift, seed)?;
        self.run_on(&self.config.scaled_method(method), seed, &stream)
    }
}
