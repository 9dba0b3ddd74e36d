//! JSON checkpoints: config, parameters, optimiser state and epoch count.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dpcnet::Ricnet;
use crate::nn::params::ParamJson;
use crate::nn::{AdamState, ParamStore};
use crate::util::write_atomic;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: Ricnet,
    pub adam: AdamState,
    /// Completed training epochs.
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    config: RunConfig,
    params: BTreeMap<String, ParamJson>,
    adam: AdamState,
    epoch: usize,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            config: self.config.clone(),
            params: self.model.params().to_json(),
            adam: self.adam.clone(),
            epoch: self.epoch,
        };
        serde_json::to_string(&file).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        file.config.validate()?;
        let params = ParamStore::from_json(file.params)?;
        let model = Ricnet::from_params(&file.config.model, params)?;
        Ok(Self {
            config: file.config,
            model,
            adam: file.adam,
            epoch: file.epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpcnet::ModelConfig;

    fn sample() -> Checkpoint {
        let mut config = RunConfig::default();
        config.model = ModelConfig::toy();
        Checkpoint {
            model: Ricnet::new(&config.model, 4).unwrap(),
            config,
            adam: AdamState::new(1e-3),
            epoch: 2,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        c.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back.model.params(), c.model.params());
        assert_eq!(back.config, c.config);
        assert_eq!(back.epoch, 2);
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn layout_has_four_sections() {
        let v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["adam", "config", "epoch", "params"]);
        let w = &v["params"]["dec.0.w"];
        assert_eq!(w["shape"], serde_json::json!([72, 64]));
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let text = sample().to_json();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(Checkpoint::from_json(truncated), Err(Error::Checkpoint(_))));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["params"].as_object_mut().unwrap().remove("dec.0.w");
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(Error::Checkpoint(_))));
        v["extra"] = serde_json::json!(1);
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
    }
}
