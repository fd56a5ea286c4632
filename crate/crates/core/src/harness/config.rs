use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::methods::MethodConfig;
use crate::model::PretrainConfig;
use crate::shift::ShiftKind;

/// One experiment matrix: dataset x shifts x methods x seeds.
///
/// Learning rates inside `methods` are written in reference units and
/// multiplied by `lr_scale` before use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub horizon: usize,
    pub batch_size: usize,
    #[serde(default = "default_holdout_fraction")]
    pub holdout_fraction: f64,
    #[serde(default = "default_lr_scale")]
    pub lr_scale: f64,
    /// Ridge added before inverting the confusion matrix; `None` = `1e-6 * trace / C`.
    #[serde(default)]
    pub ridge: Option<f64>,
    pub shifts: Vec<ShiftKind>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    pub methods: Vec<MethodConfig>,
}

fn default_holdout_fraction() -> f64 {
    0.2
}

fn default_lr_scale() -> f64 {
    1.0
}

impl RunConfig {
    /// Desk-scale protocol: 10-class, 20-dimensional Gaussian clusters, 500
    /// rows per class, 400 steps of 64 samples, all four shifts, five seeds.
    pub fn default_protocol() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            horizon: 400,
            batch_size: 64,
            holdout_fraction: 0.2,
            lr_scale: 5000.0,
            ridge: None,
            shifts: ShiftKind::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            dataset: DatasetSpec::synthetic(10, 20, 500, 3.0, 0),
            pretrain: PretrainConfig::default(),
            methods: vec![
                MethodConfig::Fth,
                MethodConfig::Ftfwh { window: 20 },
                MethodConfig::Uogd { eta: 1e-6 },
                MethodConfig::Uogd { eta: 1e-4 },
                MethodConfig::Atlas {
                    eta_grid: crate::methods::default_eta_grid(),
                    meta_rate: 1.0,
                },
                MethodConfig::Asap {
                    eta_min: 1e-6,
                    eta_max: 1e-4,
                },
            ],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.horizon < 1 {
            return fail("horizon must be >= 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return fail("holdout_fraction must lie in (0, 1)");
        }
        if !(self.lr_scale > 0.0 && self.lr_scale.is_finite()) {
            return fail("lr_scale must be positive");
        }
        if self.ridge.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return fail("ridge must be >= 0");
        }
        if self.shifts.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return fail("shifts, seeds and methods must be non-empty");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return fail("seeds must be distinct");
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodConfig::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return fail("two methods share a label");
        }
        self.dataset.validate()?;
        for m in &self.methods {
            m.validate()?;
        }
        Ok(())
    }

    /// The method with every learning rate multiplied by `lr_scale`.
    pub fn scaled_method(&self, method: &MethodConfig) -> MethodConfig {
        let s = self.lr_scale;
        match method {
            MethodConfig::Asap { eta_min, eta_max } => MethodConfig::Asap {
                eta_min: eta_min * s,
                eta_max: eta_max * s,
            },
            MethodConfig::Uogd { eta } => MethodConfig::Uogd { eta: eta * s },
            MethodConfig::Atlas {
                eta_grid,
                meta_rate,
            } => MethodConfig::Atlas {
                eta_grid: eta_grid.iter().map(|e| e * s).collect(),
                meta_rate: *meta_rate,
            },
            other => other.clone(),
        }
    }

    /// 64-bit FNV-1a hash of the configuration with seeds and output
    /// directory blanked, so reruns with other seeds share a hash.
    pub fn config_hash(&self) -> String {
        let mut neutral = self.clone();
        neutral.seeds.clear();
        neutral.output_dir = PathBuf::new();
        let text = serde_json::to_string(&neutral).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_protocol_round_trips_through_toml() {
        let config = RunConfig::default_protocol();
        config.validate().unwrap();
        let text = config.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = RunConfig::default_protocol().to_toml().unwrap();
        text.insert_str(0, "colour = \"blue\"\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs() {
        let mut c = RunConfig::default_protocol();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default_protocol();
        c.methods.push(MethodConfig::Fth);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default_protocol();
        c.shifts.clear();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default_protocol();
        c.horizon = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_seeds_only() {
        let a = RunConfig::default_protocol();
        let mut b = a.clone();
        b.seeds = vec![10, 20];
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.config_hash(), b.config_hash());
        b.horizon = 100;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn scaling_touches_only_rates() {
        let mut c = RunConfig::default_protocol();
        c.lr_scale = 4.0;
        assert_eq!(
            c.scaled_method(&MethodConfig::Asap {
                eta_min: 0.25,
                eta_max: 0.5
            }),
            MethodConfig::Asap {
                eta_min: 1.0,
                eta_max: 2.0
            }
        );
        assert_eq!(
            c.scaled_method(&MethodConfig::Ftfwh { window: 3 }),
            MethodConfig::Ftfwh { window: 3 }
        );
    }
}
