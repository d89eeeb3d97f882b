//! Run configuration assembled from an optional key-value file and flags.
//!
//! The file format is one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Keys are the long flag names with `-` or
//! `_` (both accepted), so `--lambda-f 0.1` and `lambda_f = 0.1` are the same
//! setting. Flags are applied after the file and therefore win.

use std::path::{Path, PathBuf};

use bayes_cfme::calibration::{LengthscaleMode, SweepConfig};
use bayes_cfme::estimators::{FusionConfig, Method, Theta4Kernel};
use bayes_cfme::synthetic::{linspace, SettingId, SettingSpec};
use bayes_cfme::SolveConfig;

use crate::error::CliError;

/// Keys accepted in config files, in documentation order.
pub const KEYS: &[&str] = &[
    "setting",
    "n",
    "m",
    "l",
    "alpha",
    "alpha_grid",
    "alphas",
    "method",
    "methods",
    "seeds",
    "seed",
    "seed_list",
    "lambda",
    "lambda_f",
    "level",
    "mc_samples",
    "oracle_seed",
    "lengthscale_mode",
    "lengthscales_x",
    "lengthscale_r",
    "theta4",
    "jobs",
    "out",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AlphaGrid {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub setting: SettingId,
    pub n: usize,
    pub m: usize,
    /// `None` means `min(N, 100)`.
    pub l: Option<usize>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<AlphaGrid>,
    pub alphas: Option<Vec<f64>>,
    pub method: Method,
    pub methods: Vec<Method>,
    pub seeds: usize,
    pub seed: u64,
    pub seed_list: Option<Vec<u64>>,
    pub lambda: f64,
    pub lambda_f: f64,
    pub level: f64,
    pub mc_samples: usize,
    pub oracle_seed: u64,
    pub lengthscale_mode: String,
    pub lengthscales_x: Option<Vec<f64>>,
    pub lengthscale_r: Option<f64>,
    pub theta4: Theta4Kernel,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            setting: SettingId::A,
            n: 200,
            m: 200,
            l: None,
            alpha: None,
            alpha_grid: None,
            alphas: None,
            method: Method::BayesCfmp,
            methods: Method::BAYESIAN.to_vec(),
            seeds: 1,
            seed: 0,
            seed_list: None,
            lambda: 1e-2,
            lambda_f: 1e-2,
            level: 0.95,
            mc_samples: 1_000_000,
            oracle_seed: 0,
            lengthscale_mode: "median".into(),
            lengthscales_x: None,
            lengthscale_r: None,
            theta4: Theta4Kernel::K,
            jobs: None,
            out: PathBuf::from("."),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::input(format!("{key} = {value:?}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            for (key, value) in parse_file(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "setting" => self.setting = parse(&key, v)?,
            "n" => self.n = parse(&key, v)?,
            "m" => self.m = parse(&key, v)?,
            "l" => self.l = Some(parse(&key, v)?),
            "alpha" => self.alpha = Some(parse(&key, v)?),
            "alpha_grid" => {
                let parts: Vec<&str> = v.split(':').collect();
                if parts.len() != 3 {
                    return Err(CliError::input(format!(
                        "alpha_grid must be min:max:count, got {v:?}"
                    )));
                }
                self.alpha_grid = Some(AlphaGrid {
                    min: parse(&key, parts[0])?,
                    max: parse(&key, parts[1])?,
                    count: parse(&key, parts[2])?,
                });
            }
            "alphas" => self.alphas = Some(parse_list(&key, v)?),
            "method" => self.method = parse(&key, v)?,
            "methods" => {
                self.methods = if v == "all" {
                    Method::ALL.to_vec()
                } else {
                    parse_list(&key, v)?
                };
            }
            "seeds" => self.seeds = parse(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "seed_list" => self.seed_list = Some(parse_list(&key, v)?),
            "lambda" => self.lambda = parse(&key, v)?,
            "lambda_f" => self.lambda_f = parse(&key, v)?,
            "level" => self.level = parse(&key, v)?,
            "mc_samples" => self.mc_samples = parse::<f64>(&key, v).and_then(|x| count(&key, x))?,
            "oracle_seed" => self.oracle_seed = parse(&key, v)?,
            "lengthscale_mode" => self.lengthscale_mode = v.to_ascii_lowercase(),
            "lengthscales_x" => self.lengthscales_x = Some(parse_list(&key, v)?),
            "lengthscale_r" => self.lengthscale_r = Some(parse(&key, v)?),
            "theta4" => self.theta4 = parse(&key, v)?,
            "jobs" => self.jobs = Some(parse(&key, v)?),
            "out" => self.out = PathBuf::from(v),
            _ => {
                return Err(CliError::input(format!(
                    "unknown configuration key {key:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 || self.m == 0 || self.l == Some(0) {
            return Err(CliError::input("N, M and L must be at least 1"));
        }
        if self.l_value() > self.n {
            return Err(CliError::input(format!(
                "L = {} exceeds N = {}",
                self.l_value(),
                self.n
            )));
        }
        if let Some(grid) = self.alpha_grid {
            if grid.count == 0 {
                return Err(CliError::input("alpha grid count must be at least 1"));
            }
        }
        if matches!(&self.alphas, Some(a) if a.is_empty()) {
            return Err(CliError::input("explicit alpha list is empty"));
        }
        if self.methods.is_empty() {
            return Err(CliError::input("no methods selected"));
        }
        if self.seeds == 0 || matches!(&self.seed_list, Some(s) if s.is_empty()) {
            return Err(CliError::input("at least one seed is required"));
        }
        if !(self.lambda >= 0.0 && self.lambda_f >= 0.0) {
            return Err(CliError::input("lambda and lambda_f must be nonnegative"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::input(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.mc_samples == 0 {
            return Err(CliError::input("mc_samples must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(CliError::input("jobs must be at least 1"));
        }
        self.lengthscales()?;
        Ok(())
    }

    pub fn spec(&self) -> SettingSpec {
        SettingSpec::from_id(self.setting)
    }

    pub fn l_value(&self) -> usize {
        self.l.unwrap_or(self.n.min(100))
    }

    /// Explicit list, else grid, else the single `alpha`, else the setting default.
    pub fn alpha_values(&self) -> Vec<f64> {
        if let Some(list) = &self.alphas {
            list.clone()
        } else if let Some(grid) = self.alpha_grid {
            grid.values()
        } else if let Some(a) = self.alpha {
            vec![a]
        } else {
            self.spec().default_alpha_grid()
        }
    }

    /// The single policy parameter for `simulate` and `estimate`.
    pub fn single_alpha(&self) -> Result<f64, CliError> {
        match (self.alpha, &self.alphas, self.alpha_grid) {
            (Some(a), _, _) => Ok(a),
            (None, None, None) => Ok(0.0),
            _ => Err(CliError::input(
                "this command takes a single --alpha, not a grid",
            )),
        }
    }

    pub fn seed_values(&self) -> Vec<u64> {
        match &self.seed_list {
            Some(list) => list.clone(),
            None => (0..self.seeds as u64).map(|i| self.seed + i).collect(),
        }
    }

    pub fn lengthscales(&self) -> Result<LengthscaleMode, CliError> {
        match self.lengthscale_mode.as_str() {
            "median" => Ok(LengthscaleMode::Median),
            "explicit" => match (&self.lengthscales_x, self.lengthscale_r) {
                (Some(x), Some(r)) if x.len() == 2 && x.iter().chain([&r]).all(|v| *v > 0.0) => {
                    Ok(LengthscaleMode::Explicit { x: x.clone(), r: vec![r] })
                }
                _ => Err(CliError::input(
                    "explicit lengthscales need lengthscales_x = a,b and lengthscale_r = c, all positive",
                )),
            },
            other => Err(CliError::input(format!("lengthscale_mode must be median or explicit, got {other:?}"))),
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, CliError> {
        let mut cfg = SweepConfig::for_setting(self.spec());
        cfg.alphas = self.alpha_values();
        cfg.methods = self.methods.clone();
        cfg.seeds = self.seed_values();
        cfg.n = self.n;
        cfg.m = self.m;
        cfg.l = self.l_value();
        cfg.lengthscales = self.lengthscales()?;
        cfg.fusion = FusionConfig {
            solve: SolveConfig::with_ridge(self.lambda),
            lambda_f: self.lambda_f,
            theta4: self.theta4,
        };
        cfg.level = self.level;
        cfg.mc_samples = self.mc_samples;
        cfg.oracle_seed = self.oracle_seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn count(key: &str, x: f64) -> Result<usize, CliError> {
    if x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(CliError::input(format!(
            "{key} must be a nonnegative integer, got {x}"
        )))
    }
}

/// Parses `key = value` lines.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::input(format!(
                "config line {}: expected key = value, got {line:?}",
                i + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
