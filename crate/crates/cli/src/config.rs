//! The JSON run configuration: network layers plus training, input and
//! trading sections.

use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use eiie::policy::EiieTopologySpec;
use eiie::portfolio::CommissionSchedule;
use eiie::trainer::{RollingConfig, TrainingConfig};
use eiie::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_biased: f64,
    pub snap_shot: bool,
    pub fast_train: bool,
    pub training_method: String,
    pub loss_function: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSection {
    pub window_size: usize,
    pub coin_number: usize,
    pub global_period: i64,
    pub feature_number: usize,
    pub test_portion: f64,
    pub online: bool,
    pub start_date: String,
    pub end_date: String,
    pub volume_average_days: u32,
    pub portion_reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingSection {
    pub trading_consumption: f64,
    pub rolling_training_steps: usize,
    pub learning_rate: f64,
    pub buffer_biased: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub layers: Vec<Value>,
    pub training: TrainingSection,
    pub input: InputSection,
    pub trading: TradingSection,
}

const SECTIONS: [(&str, &[&str]); 3] = [
    (
        "training",
        &[
            "steps",
            "learning_rate",
            "batch_size",
            "buffer_biased",
            "snap_shot",
            "fast_train",
            "training_method",
            "loss_function",
        ],
    ),
    (
        "input",
        &[
            "window_size",
            "coin_number",
            "global_period",
            "feature_number",
            "test_portion",
            "online",
            "start_date",
            "end_date",
            "volume_average_days",
            "portion_reversed",
        ],
    ),
    (
        "trading",
        &["trading_consumption", "rolling_training_steps", "learning_rate", "buffer_biased"],
    ),
];

/// A parsed config plus the keys that were present but not understood.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: NetConfig,
    pub unknown_keys: Vec<String>,
}

pub fn parse_config(path: &Path) -> Result<Parsed> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Parsed> {
    let root: Value = serde_json::from_str(text)?;
    let root = root
        .as_object()
        .ok_or_else(|| Error::Validation("config root must be an object".into()))?;
    let mut unknown = Vec::new();
    for key in root.keys() {
        if key != "layers" && !SECTIONS.iter().any(|(s, _)| s == key) {
            unknown.push(key.clone());
        }
    }
    let layers = match root.get("layers") {
        Some(Value::Array(a)) => a.clone(),
        Some(_) => return Err(mismatch("layers", "an array")),
        None => return Err(missing("layers")),
    };
    for (section, keys) in SECTIONS {
        let obj = match root.get(section) {
            Some(Value::Object(o)) => o,
            Some(_) => return Err(mismatch(section, "an object")),
            None => return Err(missing(section)),
        };
        for key in keys {
            if !obj.contains_key(*key) {
                return Err(missing(&format!("{section}.{key}")));
            }
        }
        unknown.extend(obj.keys().filter(|k| !keys.contains(&k.as_str())).map(|k| format!("{section}.{k}")));
    }
    let training = section(root, "training")?;
    let input = section(root, "input")?;
    let trading = section(root, "trading")?;
    let config = NetConfig {
        layers,
        training,
        input,
        trading,
    };
    config.validate()?;
    Ok(Parsed {
        config,
        unknown_keys: unknown,
    })
}

fn missing(path: &str) -> Error {
    Error::Validation(format!("missing config key `{path}`"))
}

fn mismatch(path: &str, want: &str) -> Error {
    Error::Validation(format!("config key `{path}` must be {want}"))
}

fn section<T: serde::de::DeserializeOwned>(root: &Map<String, Value>, name: &str) -> Result<T> {
    serde_path_to_error::deserialize(&root[name])
        .map_err(|e| Error::Validation(format!("config key `{name}.{}`: {}", e.path(), e.inner())))
}

/// Parses `YYYY/MM/DD` as UTC midnight.
pub fn parse_date(s: &str) -> Result<i64> {
    let date = NaiveDate::parse_from_str(s, "%Y/%m/%d")
        .map_err(|_| Error::Validation(format!("date `{s}` must look like YYYY/MM/DD")))?;
    Ok(date.and_time(NaiveTime::MIN).and_utc().timestamp())
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |path: &str, msg: &str| Err(Error::Range(format!("config key `{path}` {msg}")));
        let t = &self.training;
        if !(t.learning_rate > 0.0) {
            return range("training.learning_rate", "must be positive");
        }
        if t.batch_size == 0 {
            return range("training.batch_size", "must be at least 1");
        }
        if !(t.buffer_biased > 0.0 && t.buffer_biased <= 1.0) {
            return range("training.buffer_biased", "must lie in (0, 1]");
        }
        if t.training_method != "Adam" {
            return Err(Error::Config(format!("training.training_method `{}` is not supported (Adam only)", t.training_method)));
        }
        if t.loss_function != "loss_function6" {
            return Err(Error::Config(format!(
                "training.loss_function `{}` is not supported (loss_function6 only)",
                t.loss_function
            )));
        }
        let i = &self.input;
        if i.window_size < 2 {
            return range("input.window_size", "must be at least 2");
        }
        if i.coin_number == 0 {
            return range("input.coin_number", "must be at least 1");
        }
        if i.global_period <= 0 {
            return range("input.global_period", "must be positive");
        }
        if !(1..=3).contains(&i.feature_number) {
            return range("input.feature_number", "must be 1, 2 or 3");
        }
        if !(0.0..1.0).contains(&i.test_portion) {
            return range("input.test_portion", "must lie in [0, 1)");
        }
        if i.volume_average_days == 0 {
            return range("input.volume_average_days", "must be at least 1");
        }
        if parse_date(&i.end_date)? <= parse_date(&i.start_date)? {
            return range("input.end_date", "must come after input.start_date");
        }
        let tr = &self.trading;
        if !(0.0..1.0).contains(&tr.trading_consumption) {
            return range("trading.trading_consumption", "must lie in [0, 1)");
        }
        if !(tr.learning_rate > 0.0) {
            return range("trading.learning_rate", "must be positive");
        }
        if !(tr.buffer_biased > 0.0 && tr.buffer_biased <= 1.0) {
            return range("trading.buffer_biased", "must lie in (0, 1]");
        }
        self.topology()?;
        Ok(())
    }

    pub fn topology(&self) -> Result<EiieTopologySpec> {
        EiieTopologySpec::from_json(&self.layers)
    }

    pub fn commission(&self) -> CommissionSchedule {
        let c = self.trading.trading_consumption;
        CommissionSchedule { sell: c, buy: c }
    }

    pub fn training_config(&self, seed: u64) -> TrainingConfig {
        let steps = self.training.steps;
        TrainingConfig {
            steps,
            learning_rate: self.training.learning_rate,
            batch_size: self.training.batch_size,
            buffer_biased: self.training.buffer_biased,
            fast_train: self.training.fast_train,
            commission: self.commission(),
            seed,
            log_every: if steps >= 10_000 { 1000 } else { (steps / 10).max(1) },
            rolling: RollingConfig {
                steps: self.trading.rolling_training_steps,
                learning_rate: self.trading.learning_rate,
                buffer_biased: self.trading.buffer_biased,
            },
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates_are_utc_midnight() {
        assert_eq!(parse_date("2015/07/01").unwrap(), 1_435_708_800);
        assert!(parse_date("2015-07-01").is_err());
    }
}
