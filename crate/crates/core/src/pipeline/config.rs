//! Flat `key=value` training configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Overrides (e.g. from the
//! command line) replace file values key by key before validation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec, DEFAULT_EPSILON};
use crate::model::HeadConfig;
use crate::training::{Augmentation, LrReduction, NadamConfig, TrainingConfig};

const REQUIRED: [&str; 9] = [
    "loss",
    "batch_size",
    "learning_rate",
    "early_stopping_patience",
    "max_epochs",
    "threshold",
    "hidden_sizes",
    "dropout",
    "seed",
];

const OPTIONAL: [&str; 6] = [
    "epsilon",
    "beta1",
    "beta2",
    "epsilon_opt",
    "augmentation",
    "lr_reduction",
];

/// Starting point written by `conceptdet` users; every required key is present.
pub const TEMPLATE: &str = "\
# conceptdet training configuration
loss=sum
epsilon=1e-7
batch_size=48
learning_rate=1e-5
beta1=0.9
beta2=0.999
epsilon_opt=1e-8
augmentation=hflip
lr_reduction=0.2/5/f1
early_stopping_patience=5
max_epochs=50
threshold=0.5
hidden_sizes=256,256
dropout=0.5
seed=0
";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub training: TrainingConfig,
    pub hidden_sizes: Vec<usize>,
    pub dropout_p: f64,
}

impl TrainSettings {
    /// Head configuration for a label space of `output_size` concepts.
    pub fn head(&self, output_size: usize) -> HeadConfig {
        HeadConfig {
            hidden_sizes: self.hidden_sizes.clone(),
            dropout_p: self.dropout_p,
            output_size,
            seed: self.training.seed,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
}

pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<TrainSettings> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        map.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    if let Some(k) = map
        .keys()
        .find(|k| !REQUIRED.contains(&k.as_str()) && !OPTIONAL.contains(&k.as_str()))
    {
        return Err(Error::Config(format!("unknown key {k:?}")));
    }
    if let Some(k) = REQUIRED.iter().find(|k| !map.contains_key(**k)) {
        return Err(Error::Config(format!("missing required key {k:?}")));
    }
    let get = |k: &str| map.get(k).map(String::as_str);
    let req = |k: &str| map[k].as_str();

    let kind: LossKind = req("loss")
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let epsilon = get("epsilon").map_or(Ok(DEFAULT_EPSILON), |v| parse_value("epsilon", v))?;
    let defaults = NadamConfig::default();
    let optimizer = NadamConfig {
        beta1: get("beta1").map_or(Ok(defaults.beta1), |v| parse_value("beta1", v))?,
        beta2: get("beta2").map_or(Ok(defaults.beta2), |v| parse_value("beta2", v))?,
        epsilon: get("epsilon_opt")
            .map_or(Ok(defaults.epsilon), |v| parse_value("epsilon_opt", v))?,
    };
    let lr_reduction = match get("lr_reduction") {
        None | Some("none") => None,
        Some(v) => Some(v.parse::<LrReduction>()?),
    };
    let hidden_raw = req("hidden_sizes");
    let hidden_sizes = if hidden_raw.is_empty() || hidden_raw == "none" {
        Vec::new()
    } else {
        hidden_raw
            .split(',')
            .map(|s| parse_value("hidden_sizes", s.trim()))
            .collect::<Result<Vec<usize>>>()?
    };

    let training = TrainingConfig {
        loss: LossSpec::new(kind, epsilon).map_err(|e| Error::Config(e.to_string()))?,
        batch_size: parse_value("batch_size", req("batch_size"))?,
        learning_rate: parse_value("learning_rate", req("learning_rate"))?,
        optimizer,
        augmentation: get("augmentation").map_or(Ok(Augmentation::None), str::parse)?,
        lr_reduction,
        early_stopping_patience: parse_value(
            "early_stopping_patience",
            req("early_stopping_patience"),
        )?,
        max_epochs: parse_value("max_epochs", req("max_epochs"))?,
        threshold: parse_value("threshold", req("threshold"))?,
        seed: parse_value("seed", req("seed"))?,
    };
    training.validate()?;
    let settings = TrainSettings {
        training,
        hidden_sizes,
        dropout_p: parse_value("dropout", req("dropout"))?,
    };
    settings
        .head(1)
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(settings)
}
