//! Run configuration: a TOML file with dotted keys layered over built-in defaults,
//! then `--set key=value` overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use futrl::agents::{AgentConfig, Algo};
use futrl::baselines::BaselineKind;
use futrl::env::RewardConfig;
use futrl::evaluation::Calendar;

/// Problems with the configuration itself (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl From<futrl::Error> for ConfigError {
    fn from(e: futrl::Error) -> Self {
        ConfigError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory of `<TICKER>.csv` files for the csv source.
    pub dir: PathBuf,
    /// Optional catalog CSV (`ticker,description,asset_class`); empty for none.
    pub catalog: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub contracts_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub first_test_year: i32,
    pub retrain_interval_years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentsConfig {
    pub algos: Vec<Algo>,
    pub seed: u64,
    pub dqn: AgentConfig,
    pub pg: AgentConfig,
    pub a2c: AgentConfig,
}

impl AgentsConfig {
    pub fn get(&self, algo: Algo) -> &AgentConfig {
        match algo {
            Algo::Dqn => &self.dqn,
            Algo::Pg => &self.pg,
            Algo::A2c => &self.a2c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinesConfig {
    pub kinds: Vec<BaselineKind>,
    /// Average the per-scale MACD signals (true) or sum them.
    pub macd_average: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub calendar: Calendar,
    /// Cost rates of the sensitivity sweep, in basis points.
    pub sweep_bp: Vec<f64>,
    /// Write per-contract position and trade traces.
    pub dump_traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub split: SplitConfig,
    pub agents: AgentsConfig,
    pub baselines: BaselinesConfig,
    /// `reward.bp` is the evaluation cost rate; training uses each agent's `bp_train`.
    pub reward: RewardConfig,
    pub evaluation: EvaluationConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig {
                source: DataSource::Synthetic,
                dir: PathBuf::from("data"),
                catalog: PathBuf::new(),
            },
            synthetic: SyntheticConfig {
                seed: 7,
                start_date: NaiveDate::from_ymd_opt(2005, 1, 3).expect("valid date"),
                n_days: 3914,
                contracts_per_class: 3,
            },
            split: SplitConfig {
                first_test_year: 2011,
                retrain_interval_years: 5,
            },
            agents: AgentsConfig {
                algos: Algo::ALL.to_vec(),
                seed: 1,
                dqn: AgentConfig::for_algo(Algo::Dqn),
                pg: AgentConfig::for_algo(Algo::Pg),
                a2c: AgentConfig::for_algo(Algo::A2c),
            },
            baselines: BaselinesConfig {
                kinds: BaselineKind::ALL.to_vec(),
                macd_average: true,
            },
            reward: RewardConfig::default(),
            evaluation: EvaluationConfig {
                calendar: Calendar::Intersection,
                sweep_bp: vec![0.0, 1.0, 5.0, 10.0, 15.0, 20.0, 25.0],
                dump_traces: false,
            },
            report: ReportConfig { svg: true },
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then `overrides` of the form `key.path=value`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut merged = Value::try_from(RunConfig::default()).map_err(|e| ConfigError(e.to_string()))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            let table: Table = text
                .parse()
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            merge(&mut merged, Value::Table(table), "")?;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("override `{o}` is not key=value")))?;
            let value = parse_scalar(raw.trim());
            let mut nested = value;
            for part in key.trim().rsplit('.') {
                let mut t = Table::new();
                t.insert(part.to_string(), nested);
                nested = Value::Table(t);
            }
            merge(&mut merged, nested, "")?;
        }
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward.validate()?;
        for algo in &self.agents.algos {
            let a = self.agents.get(*algo);
            if a.algo != *algo {
                return Err(ConfigError(format!(
                    "agents.{}.algo must be {}",
                    algo_key(*algo),
                    algo_key(*algo)
                )));
            }
            a.validate()?;
        }
        if self.split.retrain_interval_years == 0 {
            return Err(ConfigError("split.retrain_interval_years must be >= 1".into()));
        }
        if self.synthetic.contracts_per_class == 0 {
            return Err(ConfigError("synthetic.contracts_per_class must be >= 1".into()));
        }
        if let Some(bp) = self.evaluation.sweep_bp.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(ConfigError(format!("evaluation.sweep_bp contains {bp}")));
        }
        if self.agents.algos.is_empty() && self.baselines.kinds.is_empty() {
            return Err(ConfigError("no strategies configured".into()));
        }
        Ok(())
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn algo_key(algo: Algo) -> &'static str {
    match algo {
        Algo::Dqn => "dqn",
        Algo::Pg => "pg",
        Algo::A2c => "a2c",
    }
}

fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Overlay `new` on `base`. Keys absent from `base` are rejected so typos fail loudly.
fn merge(base: &mut Value, new: Value, path: &str) -> Result<(), ConfigError> {
    match (base, new) {
        (Value::Table(b), Value::Table(n)) => {
            for (k, v) in n {
                let key = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| ConfigError(format!("unknown config key `{key}`")))?;
                merge(slot, v, &key)?;
            }
            Ok(())
        }
        (Value::Table(_), _) => Err(ConfigError(format!("`{path}` must be a table"))),
        (slot @ Value::Float(_), Value::Integer(i)) => {
            *slot = Value::Float(i as f64);
            Ok(())
        }
        (slot @ Value::Array(_), Value::Array(items)) => {
            let floats = matches!(slot, Value::Array(a) if matches!(a.first(), Some(Value::Float(_))));
            *slot = Value::Array(
                items
                    .into_iter()
                    .map(|v| match v {
                        Value::Integer(i) if floats => Value::Float(i as f64),
                        v => v,
                    })
                    .collect(),
            );
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}
