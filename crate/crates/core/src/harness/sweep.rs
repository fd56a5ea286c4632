use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::lab::Lab;
use super::matrix::{worker_pool, MatrixOptions};
use super::stats::{mean, sample_std};
use crate::asap::LrBounds;
use crate::error::{Error, Result};
use crate::methods::{mean_accuracy, MethodConfig};

/// Which ASAP bound a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    EtaMin,
    EtaMax,
}

impl SweepTarget {
    pub fn name(self) -> &'static str {
        match self {
            SweepTarget::EtaMin => "eta_min",
            SweepTarget::EtaMax => "eta_max",
        }
    }

    /// The bound held fixed while the other varies.
    pub fn fixed_value(self) -> f64 {
        match self {
            SweepTarget::EtaMin => LrBounds::DEFAULT_MAX,
            SweepTarget::EtaMax => LrBounds::DEFAULT_MIN,
        }
    }

    /// `(eta_min, eta_max)` in reference units for one swept value.
    pub fn bounds_for(self, value: f64) -> (f64, f64) {
        match self {
            SweepTarget::EtaMin => (value, self.fixed_value()),
            SweepTarget::EtaMax => (self.fixed_value(), value),
        }
    }
}

impl fmt::Display for SweepTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta_min" => Ok(SweepTarget::EtaMin),
            "eta_max" => Ok(SweepTarget::EtaMax),
            other => Err(Error::Config(format!(
                "cannot vary '{other}'; expected eta_min or eta_max"
            ))),
        }
    }
}

/// Accuracy for one swept value. The mean and std are taken over seeds of
/// each seed's accuracy averaged across shifts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub vary: SweepTarget,
    pub value: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub runs: usize,
    pub failures: usize,
    pub mean_acc: Option<f64>,
    pub std_acc: Option<f64>,
    pub error: Option<String>,
}

pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number: '{}'", v.trim())))
        })
        .collect()
}

/// ASAP over every configured shift and seed, once per value of the varied
/// bound. The other bound stays at its default; both are multiplied by
/// `lr_scale`. Combinations with `eta_min > eta_max` yield a row carrying the
/// error instead of an accuracy.
pub fn sensitivity_sweep(
    config: &RunConfig,
    vary: SweepTarget,
    values: &[f64],
    options: MatrixOptions,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Config("sweep values must be positive".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sweep values must be strictly increasing".into(),
        ));
    }
    let pool = worker_pool(options.workers())?;
    pool.install(|| {
        let lab = Lab::new(config.clone())?;
        Ok(values
            .iter()
            .map(|&value| sweep_value(&lab, vary, value))
            .collect())
    })
}

fn sweep_value(lab: &Lab, vary: SweepTarget, value: f64) -> SweepRow {
    let config = &lab.config;
    let (eta_min, eta_max) = vary.bounds_for(value);
    let mut row = SweepRow {
        vary,
        value,
        eta_min,
        eta_max,
        runs: 0,
        failures: 0,
        mean_acc: None,
        std_acc: None,
        error: None,
    };
    if let Err(e) = LrBounds::new(eta_min, eta_max) {
        row.failures = config.seeds.len() * config.shifts.len();
        row.error = Some(e.to_string());
        return row;
    }
    let method = MethodConfig::Asap { eta_min, eta_max };
    let per_seed: Vec<(usize, Vec<f64>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut failures = 0;
            let mut accs = Vec::new();
            for &shift in &config.shifts {
                match lab.run_cell(shift, &method, seed) {
                    Ok(records) => accs.push(100.0 * mean_accuracy(&records)),
                    Err(_) => failures += 1,
                }
            }
            (failures, accs)
        })
        .collect();
    let mut seed_means = Vec::new();
    for (failures, accs) in per_seed {
        row.failures += failures;
        row.runs += accs.len();
        if failures == 0 {
            seed_means.push(mean(&accs));
        }
    }
    if seed_means.is_empty() {
        row.error = Some("every run failed".into());
    } else {
        row.mean_acc = Some(mean(&seed_means));
        row.std_acc = Some(sample_std(&seed_means));
    }
    row
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::structural(e.to_string()))
}
