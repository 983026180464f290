use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::ShapConfig;
use crate::convlstm::{StackConfig, TrainConfig, DEFAULT_CHANNELS, DEFAULT_DROPOUT};
use crate::datagen::SurrogateConfig;
use crate::ensemble::{MetaConfig, MetaTrainConfig, DEFAULT_META_PLAN, META_INPUTS};
use crate::error::{Error, Result};
use crate::persist::{check_schema, read_json, SCHEMA_VERSION};
use crate::pipeline::SplitMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::invalid(format!("unknown scale '{other}' (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// Generated records and the prepared windows beneath them.
    pub data: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Paths {
    pub fn under(root: &Path) -> Self {
        Self { data: root.join("data"), models: root.join("models"), reports: root.join("reports") }
    }

    pub fn prepared(&self) -> PathBuf {
        self.data.join("prepared")
    }

    pub fn base_model(&self, resolution: usize) -> PathBuf {
        self.models.join(format!("{}.json", model_id(resolution)))
    }

    pub fn meta_model(&self) -> PathBuf {
        self.models.join("meta.json")
    }
}

/// Identifier of the base model reading `resolution` phases.
pub fn model_id(resolution: usize) -> String {
    format!("t{resolution}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSettings {
    pub background: usize,
    #[serde(default)]
    pub max_per_step: Option<usize>,
}

impl From<&ShapSettings> for ShapConfig {
    fn from(s: &ShapSettings) -> Self {
        ShapConfig { background: s.background, max_per_step: s.max_per_step }
    }
}

/// Everything a run depends on. One seed drives every random choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub paths: Paths,
    pub n_per_case: usize,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    /// ConvLSTM channel plan, input channel first.
    pub channels: Vec<usize>,
    pub dropout: f64,
    /// Input lengths of the three base models, ascending.
    pub resolutions: Vec<usize>,
    pub horizon: usize,
    pub train: TrainConfig,
    pub meta: MetaConfig,
    pub meta_train: MetaTrainConfig,
    pub split_mode: SplitMode,
    pub split_ratios: [f64; 3],
    pub shap: ShapSettings,
    /// Test forecasts written out in full by the rollout command.
    pub rollout_examples: usize,
}

impl RunConfig {
    pub fn paper() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            paths: Paths::under(Path::new("wallcast-run")),
            n_per_case: 1000,
            surrogate: SurrogateConfig::default(),
            channels: DEFAULT_CHANNELS.to_vec(),
            dropout: DEFAULT_DROPOUT,
            resolutions: vec![3, 6, 10],
            horizon: 10,
            train: TrainConfig { lr: 1e-3, batch_size: 64, max_epochs: 200, patience: 10, ..Default::default() },
            meta: MetaConfig::with_plan(DEFAULT_META_PLAN.to_vec()),
            meta_train: MetaTrainConfig::default(),
            split_mode: SplitMode::Sequence,
            split_ratios: [0.7, 0.2, 0.1],
            shap: ShapSettings { background: 256, max_per_step: None },
            rollout_examples: 4,
        }
    }

    /// Small enough to run end to end in minutes on one core.
    pub fn desk() -> Self {
        Self {
            n_per_case: 60,
            channels: vec![1, 16, 8, 4, 4],
            train: TrainConfig {
                lr: 1e-3,
                batch_size: 32,
                max_epochs: 30,
                patience: 5,
                max_batches_per_epoch: Some(16),
                max_val_samples: Some(256),
                ..Default::default()
            },
            // Half the units of an 8-wide layer dropped leaves the net unable to
            // fit; the narrow desk plan trains without dropout.
            meta: MetaConfig { dropout: 0.0, ..MetaConfig::with_plan(vec![3, 64, 64, 32, 32, 16, 16, 8, 8, 1]) },
            meta_train: MetaTrainConfig {
                batch_size: 256,
                max_epochs: 30,
                patience: 5,
                max_batches_per_epoch: Some(32),
                max_holdout_samples: Some(20_000),
                ..Default::default()
            },
            shap: ShapSettings { background: 256, max_per_step: Some(100) },
            rollout_examples: 2,
            ..Self::paper()
        }
    }

    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(),
            Scale::Paper => Self::paper(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        check_schema(path, cfg.schema_version)?;
        cfg.validate().map_err(|e| e.context(&path.display().to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.len() != META_INPUTS {
            return Err(Error::invalid(format!(
                "exactly {META_INPUTS} resolutions are needed, got {:?}",
                self.resolutions
            )));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) || self.resolutions[0] == 0 {
            return Err(Error::invalid("resolutions must be positive and strictly ascending"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.n_per_case == 0 {
            return Err(Error::invalid("n_per_case must be at least 1"));
        }
        self.surrogate.validate()?;
        let shortest = crate::datagen::ExcavationCase::A.phases();
        if self.max_resolution() + self.horizon > shortest {
            return Err(Error::invalid(format!(
                "resolution {} plus horizon {} leaves no forecast origin in a {shortest}-phase record",
                self.max_resolution(),
                self.horizon
            )));
        }
        for t in &self.resolutions {
            crate::convlstm::ConvLstmStack::zeros(self.stack_config(*t))?;
        }
        crate::ensemble::MetaNet::zeros(self.meta.clone())?;
        crate::pipeline::split_counts(1, self.split_ratios)?;
        Ok(())
    }

    pub fn stack_config(&self, resolution: usize) -> StackConfig {
        StackConfig { dropout: self.dropout, ..StackConfig::new(resolution, self.channels.clone()) }
    }

    pub fn min_resolution(&self) -> usize {
        self.resolutions[0]
    }

    pub fn max_resolution(&self) -> usize {
        self.resolutions[self.resolutions.len() - 1]
    }

    pub fn model_ids(&self) -> [String; META_INPUTS] {
        [model_id(self.resolutions[0]), model_id(self.resolutions[1]), model_id(self.resolutions[2])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::desk().validate().unwrap();
        RunConfig::paper().validate().unwrap();
        assert_eq!(RunConfig::paper().stack_config(3).param_count(), 467_332);
        assert_eq!(RunConfig::paper().meta.param_count(), 523_713);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut c = RunConfig::desk();
        c.resolutions = vec![6, 3, 10];
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.resolutions = vec![3, 6];
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.horizon = 25;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        crate::persist::write_json(&p, &RunConfig::desk()).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), RunConfig::desk());
        let text = std::fs::read_to_string(&p).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Data(_))));
    }
}
