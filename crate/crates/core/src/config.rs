//! Flat `key = value` configuration files.
//!
//! Keys are the field names of [`TrainConfig`] and [`HparamSpace`]. Blank
//! lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    /// 1e-2 suits the from-scratch reference encoder; fine-tuning a
    /// pretrained transformer adapter wants 3e-5.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub val_fraction: f64,
    /// Mention and concept embedding width.
    pub dim: usize,
    pub min_count: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

pub const PRETRAINED_LEARNING_RATE: f64 = 3e-5;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 300,
            patience: 30,
            seed: 0,
            weight_decay: 0.0,
            val_fraction: 0.1,
            dim: 64,
            min_count: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| invalid(key, value, e.to_string()))
}

fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "learning_rate",
        "batch_size",
        "max_epochs",
        "patience",
        "seed",
        "weight_decay",
        "val_fraction",
        "dim",
        "min_count",
        "beta1",
        "beta2",
        "adam_eps",
    ];

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (key, value) in parse_lines(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value. Does not run [`TrainConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "val_fraction" => self.val_fraction = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "min_count" => self.min_count = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "adam_eps" => self.adam_eps = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, value: String, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(invalid(key, &value, reason))
            }
        };
        // zero is allowed: it turns training into a no-op
        check(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            self.learning_rate.to_string(),
            "must be finite and non-negative",
        )?;
        check(
            self.batch_size >= 1,
            "batch_size",
            self.batch_size.to_string(),
            "must be at least 1",
        )?;
        check(
            self.max_epochs >= 1,
            "max_epochs",
            self.max_epochs.to_string(),
            "must be at least 1",
        )?;
        check(
            self.patience >= 1,
            "patience",
            self.patience.to_string(),
            "must be at least 1",
        )?;
        check(
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            "weight_decay",
            self.weight_decay.to_string(),
            "must be finite and non-negative",
        )?;
        check(
            self.val_fraction > 0.0 && self.val_fraction < 1.0,
            "val_fraction",
            self.val_fraction.to_string(),
            "must lie strictly between 0 and 1",
        )?;
        check(
            self.dim >= 1,
            "dim",
            self.dim.to_string(),
            "must be at least 1",
        )?;
        check(
            (0.0..1.0).contains(&self.beta1),
            "beta1",
            self.beta1.to_string(),
            "must lie in [0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.beta2),
            "beta2",
            self.beta2.to_string(),
            "must lie in [0, 1)",
        )?;
        check(
            self.adam_eps > 0.0,
            "adam_eps",
            self.adam_eps.to_string(),
            "must be positive",
        )
    }

    /// Canonical text form; [`TrainConfig::parse`] reads it back exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "val_fraction = {}", self.val_fraction);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "min_count = {}", self.min_count);
        let _ = writeln!(s, "beta1 = {}", self.beta1);
        let _ = writeln!(s, "beta2 = {}", self.beta2);
        let _ = writeln!(s, "adam_eps = {}", self.adam_eps);
        s
    }
}

/// Sampling distribution for one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Range {
    LogUniform {
        low: f64,
        high: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Inclusive integer range.
    Int {
        low: i64,
        high: i64,
    },
    /// Values kept verbatim, so integers stay integers.
    Choice(Vec<String>),
}

impl Range {
    /// Parses `loguniform(a, b)`, `uniform(a, b)`, `int(a, b)` or `choice(v1, v2, ...)`.
    /// Returns `None` for anything else.
    pub fn parse(key: &str, value: &str) -> Option<Result<Self, ConfigError>> {
        let (kind, rest) = value.split_once('(')?;
        let args = rest.strip_suffix(')')?;
        let args: Vec<&str> = args
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let two = |args: &[&str]| -> Result<(f64, f64), ConfigError> {
            match args {
                [a, b] => Ok((parse_num(key, a)?, parse_num(key, b)?)),
                _ => Err(invalid(key, value, "expected two bounds")),
            }
        };
        let range = match kind.trim() {
            "loguniform" => two(&args).and_then(|(low, high)| {
                if low > 0.0 && low <= high {
                    Ok(Range::LogUniform { low, high })
                } else {
                    Err(invalid(key, value, "need 0 < low <= high"))
                }
            }),
            "uniform" => two(&args).and_then(|(low, high)| {
                if low <= high {
                    Ok(Range::Uniform { low, high })
                } else {
                    Err(invalid(key, value, "need low <= high"))
                }
            }),
            "int" => match args.as_slice() {
                [a, b] => parse_num::<i64>(key, a).and_then(|low| {
                    let high = parse_num::<i64>(key, b)?;
                    if low <= high {
                        Ok(Range::Int { low, high })
                    } else {
                        Err(invalid(key, value, "need low <= high"))
                    }
                }),
                _ => Err(invalid(key, value, "expected two bounds")),
            },
            "choice" if !args.is_empty() => {
                Ok(Range::Choice(args.iter().map(|a| a.to_string()).collect()))
            }
            "choice" => Err(invalid(key, value, "empty choice")),
            _ => return None,
        };
        Some(range)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> String {
        match self {
            Range::LogUniform { low, high } => {
                if low == high {
                    return low.to_string();
                }
                let x = rng.gen_range(low.ln()..high.ln()).exp();
                x.clamp(*low, *high).to_string()
            }
            Range::Uniform { low, high } => {
                if low == high {
                    return low.to_string();
                }
                rng.gen_range(*low..*high).to_string()
            }
            Range::Int { low, high } => rng.gen_range(*low..=*high).to_string(),
            Range::Choice(values) => values[rng.gen_range(0..values.len())].clone(),
        }
    }

    /// Whether a sampled textual value lies inside this range.
    pub fn contains(&self, value: &str) -> bool {
        match self {
            Range::LogUniform { low, high } | Range::Uniform { low, high } => value
                .parse::<f64>()
                .is_ok_and(|x| (*low..=*high).contains(&x)),
            Range::Int { low, high } => value
                .parse::<i64>()
                .is_ok_and(|x| (*low..=*high).contains(&x)),
            Range::Choice(values) => values.iter().any(|v| v == value),
        }
    }
}

/// Random-search space: a base config plus ranges for some of its keys.
#[derive(Debug, Clone, PartialEq)]
pub struct HparamSpace {
    pub base: TrainConfig,
    pub ranges: Vec<(String, Range)>,
    pub n_trials: usize,
    pub search_seed: u64,
}

impl Default for HparamSpace {
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            ranges: Vec::new(),
            n_trials: 8,
            search_seed: 0,
        }
    }
}

impl HparamSpace {
    /// Reads `n_trials`, `search_seed`, plain `TrainConfig` keys (fixed
    /// values) and `TrainConfig` keys with a range expression (searched).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut space = Self::default();
        for (key, value) in parse_lines(text)? {
            match key.as_str() {
                "n_trials" => space.n_trials = parse_num(&key, &value)?,
                "search_seed" => space.search_seed = parse_num(&key, &value)?,
                _ if !TrainConfig::KEYS.contains(&key.as_str()) => {
                    return Err(ConfigError::UnknownKey(key));
                }
                _ => match Range::parse(&key, &value) {
                    Some(range) => {
                        let range = range?;
                        space.ranges.retain(|(k, _)| *k != key);
                        space.ranges.push((key, range));
                    }
                    None => space.base.set(&key, &value)?,
                },
            }
        }
        if space.n_trials == 0 {
            return Err(invalid("n_trials", "0", "must be at least 1"));
        }
        space.base.validate()?;
        Ok(space)
    }

    /// Draws `n_trials` configs. The sequence depends only on `search_seed`.
    pub fn sample_configs(&self) -> Result<Vec<TrainConfig>, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.search_seed);
        (0..self.n_trials)
            .map(|_| {
                let mut cfg = self.base.clone();
                for (key, range) in &self.ranges {
                    cfg.set(key, &range.sample(&mut rng))?;
                }
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}
