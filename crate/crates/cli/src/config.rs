use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;
use wfvar::solver::{Optimizer, SolveOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
    #[error("override {0:?} has no value")]
    MissingValue(String),
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

const KEYS: &[(&str, &str)] = &[
    ("m1", "1"),
    ("m2", "1824"),
    ("e1", "-1"),
    ("e2", "1"),
    ("r12", "100"),
    ("arc", "6.283185307179586"),
    ("nodes_per_turn", "256"),
    ("n_chains", "0"),
    ("refine", "true"),
    ("input", ""),
    ("out", "out"),
    ("max_iters", "50"),
    ("gradient_tol", "1e-10"),
    ("residual_tol", "1e-6"),
    ("armijo_c", "1e-4"),
    ("backtrack", "0.5"),
    ("max_backtracks", "40"),
    ("rebuild_threshold", "0.1"),
    ("optimizer", "lbfgs"),
    ("memory", "8"),
    ("hessian_metric", "true"),
    ("acceleration_bound", "1"),
    ("perturb", "0"),
    ("seed", "1"),
    ("scan_r", "1000,100,30,10,3"),
    ("pairs", "10"),
    ("eigenvalues", "10"),
    ("criteria", "1,2,3,4,5,6,7,8,9"),
];

/// Flat key=value configuration; every key has a default.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
            cfg.merge_text(&text)?;
        }
        cfg.merge_args(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.replace('-', "_");
        match self.values.get_mut(&key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(key)),
        }
    }

    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// `--key value` or `--key=value` pairs.
    pub fn merge_args(&mut self, args: &[String]) -> Result<(), ConfigError> {
        let mut it = args.iter();
        while let Some(a) = it.next() {
            let Some(body) = a.strip_prefix("--") else {
                return Err(ConfigError::UnknownKey(a.clone()));
            };
            if let Some((k, v)) = body.split_once('=') {
                self.set(k, v)?;
            } else {
                let v = it.next().ok_or_else(|| ConfigError::MissingValue(body.to_string()))?;
                self.set(body, v)?;
            }
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let s = self.str(key);
        s.parse().map_err(|_| ConfigError::Value { key: key.into(), value: s.into() })
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parse(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.parse(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        self.parse(key)
    }

    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.str(key)
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().map_err(|_| ConfigError::Value { key: key.into(), value: s.into() }))
            .collect()
    }

    pub fn list_usize(&self, key: &str) -> Result<Vec<usize>, ConfigError> {
        self.str(key)
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().map_err(|_| ConfigError::Value { key: key.into(), value: s.into() }))
            .collect()
    }

    pub fn input(&self) -> Option<PathBuf> {
        let s = self.str("input");
        (!s.is_empty()).then(|| PathBuf::from(s))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.str("out"))
    }

    pub fn masses(&self) -> Result<[f64; 2], ConfigError> {
        Ok([self.f64("m1")?, self.f64("m2")?])
    }

    pub fn charges(&self) -> Result<[f64; 2], ConfigError> {
        Ok([self.f64("e1")?, self.f64("e2")?])
    }

    pub fn solve_options(&self) -> Result<SolveOptions, ConfigError> {
        let optimizer = match self.str("optimizer") {
            "lbfgs" | "quasi-newton" => Optimizer::QuasiNewton,
            "steepest" | "steepest-descent" => Optimizer::SteepestDescent,
            other => return Err(ConfigError::Value { key: "optimizer".into(), value: other.into() }),
        };
        Ok(SolveOptions {
            max_iters: self.usize("max_iters")?,
            gradient_tol: self.f64("gradient_tol")?,
            residual_tol: self.f64("residual_tol")?,
            armijo_c: self.f64("armijo_c")?,
            backtrack: self.f64("backtrack")?,
            max_backtracks: self.usize("max_backtracks")?,
            rebuild_threshold: self.f64("rebuild_threshold")?,
            optimizer,
            memory: self.usize("memory")?,
            hessian_metric: self.bool("hessian_metric")?,
            acceleration_bound: self.f64("acceleration_bound")?,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let [m1, m2] = self.masses()?;
        if !(m1 > 0.0 && m2 > 0.0) {
            return Err(ConfigError::Invalid("masses must be positive".into()));
        }
        let [e1, e2] = self.charges()?;
        if e1 == 0.0 || e2 == 0.0 || !e1.is_finite() || !e2.is_finite() {
            return Err(ConfigError::Invalid("charges must be nonzero".into()));
        }
        if !(self.f64("r12")? > 0.0) {
            return Err(ConfigError::Invalid("r12 must be positive".into()));
        }
        self.f64("arc")?;
        self.usize("nodes_per_turn")?;
        self.usize("n_chains")?;
        self.bool("refine")?;
        self.f64("perturb")?;
        self.u64("seed")?;
        self.usize("pairs")?;
        self.usize("eigenvalues")?;
        self.list_f64("scan_r")?;
        self.list_usize("criteria")?;
        if let Some(p) = self.input() {
            if !p.exists() {
                return Err(ConfigError::Invalid(format!("input {} does not exist", p.display())));
            }
        }
        self.solve_options()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}
