//! Run configuration read from a strict JSON file.
//!
//! Every section has defaults, so `{}` is a valid config. Unknown keys are
//! rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dpcnet::{LossWeights, ModelConfig};
use crate::metrics::DEFAULT_TAU;
use crate::nn::LrSchedule;
use crate::{Error, Result};

/// Which latent noise a training step draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    /// Fresh noise for every example in every epoch.
    #[default]
    PerStep,
    /// The same noise for an example in every epoch.
    PerExample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub loss_weights: LossWeights,
    pub lr: LrSchedule,
    pub epochs: usize,
    pub fscore_tau: f64,
    /// Apply a fresh random rigid motion to every training pair each epoch.
    pub augment_rigid: bool,
    pub max_translation: f64,
    pub noise: NoiseSchedule,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            loss_weights: LossWeights::default(),
            lr: LrSchedule::default(),
            epochs: 100,
            fscore_tau: DEFAULT_TAU,
            augment_rigid: false,
            max_translation: crate::geom::DEFAULT_MAX_TRANSLATION,
            noise: NoiseSchedule::PerStep,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss_weights.validate()?;
        let lr = &self.lr;
        if !(lr.initial > 0.0 && lr.initial.is_finite()) || !(lr.decay > 0.0 && lr.decay <= 1.0) || lr.every == 0 {
            return Err(Error::Config(format!("invalid learning-rate schedule {lr:?}")));
        }
        if !(self.fscore_tau > 0.0 && self.fscore_tau.is_finite()) {
            return Err(Error::Config(format!("fscore_tau = {} must be positive", self.fscore_tau)));
        }
        if !(self.max_translation >= 0.0 && self.max_translation.is_finite()) {
            return Err(Error::Config(format!(
                "max_translation = {} must be non-negative",
                self.max_translation
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.model = ModelConfig::toy();
        c.epochs = 3;
        c.paths.data = Some("d/manifest.csv".into());
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected_at_any_depth() {
        for text in [
            r#"{"sed": 1}"#,
            r#"{"model": {"latent": 3}}"#,
            r#"{"model": {"encoder": {"width": [1]}}}"#,
            r#"{"lr": {"start": 0.1}}"#,
            r#"{"paths": {"out": "x"}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            r#"{"loss_weights": {"w_rec": -1}}"#,
            r#"{"model": {"latent_dim": 0}}"#,
            r#"{"fscore_tau": 0}"#,
            r#"{"lr": {"every": 0}}"#,
            r#"{"model": {"kl_direction": "sideways"}}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
        let c = RunConfig::from_json(r#"{"model": {"kl_direction": "phi_lambda"}, "noise": "per_example"}"#).unwrap();
        assert_eq!(c.noise, NoiseSchedule::PerExample);
    }
}
