//! Run configuration: line-oriented `key = value` text with `#` comments
//! and dotted keys. Every key has a default; unknown keys are rejected.
//! CLI flags carry the same keys and override file values.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{CwError, Result};
use crate::scenarios::Scenario;
use crate::trainer::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Split,
    Permuted,
}

impl StreamKind {
    pub fn name(&self) -> &'static str {
        match self {
            StreamKind::Split => "split",
            StreamKind::Permuted => "permuted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub stream: StreamKind,
    pub profile: Profile,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,

    pub data_source: DataSource,
    pub data_dir: PathBuf,
    pub data_seed: u64,
    /// 0 means "use every sample".
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    /// None defers to the profile/scenario desk default.
    pub blob_dim: Option<usize>,
    pub blob_spread: Option<f64>,
    pub classes: usize,
    pub permuted_tasks: usize,

    /// None defers to the per-scenario desk default.
    pub lambda: Option<f64>,
    pub beta: f64,
    pub lambda_w: f64,
    pub replay_fraction: f64,
    pub generator_cold_start: bool,

    /// None defers to the profile/stream default.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub lr_first: f64,
    /// None defers to the profile/scenario default.
    pub lr_later: Option<f64>,
    pub sgd_lr: f64,
    pub adagrad_lr: f64,
    pub generator_epochs: usize,
    /// None defers to the profile default.
    pub generator_lr: Option<f64>,

    pub grid_lambdas: Vec<f64>,
    pub grid_betas: Vec<f64>,
    pub grid_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Idl,
            stream: StreamKind::Split,
            profile: Profile::Desk,
            method: Method::CwTalar,
            seeds: vec![1, 2, 3],
            out_dir: PathBuf::from("runs/out"),
            data_source: DataSource::Synthetic,
            data_dir: PathBuf::from("data/mnist"),
            data_seed: 7,
            train_per_class: None,
            test_per_class: None,
            blob_dim: None,
            blob_spread: None,
            classes: 10,
            permuted_tasks: 5,
            lambda: None,
            beta: 1e-3,
            lambda_w: 3.0,
            replay_fraction: 0.0,
            generator_cold_start: false,
            epochs: None,
            batch_size: 128,
            lr_first: 1e-4,
            lr_later: None,
            sgd_lr: 0.05,
            adagrad_lr: 0.01,
            generator_epochs: 10,
            generator_lr: None,
            grid_lambdas: vec![1.0, 10.0, 100.0, 1000.0],
            grid_betas: vec![1e-3],
            grid_seeds: 1,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CwError::Config(format!("bad boolean for {key}: '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CwError::Config(format!("bad value for {key}: '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl RunConfig {
    /// Apply one dotted key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "scenario" => self.scenario = Scenario::parse(v)?,
            "stream" => {
                self.stream = match v {
                    "split" => StreamKind::Split,
                    "permuted" => StreamKind::Permuted,
                    _ => return Err(CwError::Config(format!("unknown stream '{v}'"))),
                }
            }
            "profile" => {
                self.profile = match v {
                    "desk" => Profile::Desk,
                    "paper" => Profile::Paper,
                    _ => return Err(CwError::Config(format!("unknown profile '{v}'"))),
                }
            }
            "method" => self.method = Method::parse(v)?,
            "seeds" => {
                self.seeds = parse_list(key, v)?;
                if self.seeds.is_empty() {
                    return Err(CwError::Config("seeds list is empty".into()));
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(v),
            "data.source" => {
                self.data_source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "idx" => DataSource::Idx,
                    _ => return Err(CwError::Config(format!("unknown data source '{v}'"))),
                }
            }
            "data.dir" => self.data_dir = PathBuf::from(v),
            "data.seed" => self.data_seed = parse_num(key, v)?,
            "data.train_per_class" => {
                let n: usize = parse_num(key, v)?;
                self.train_per_class = if n == 0 { None } else { Some(n) };
            }
            "data.test_per_class" => {
                let n: usize = parse_num(key, v)?;
                self.test_per_class = if n == 0 { None } else { Some(n) };
            }
            "data.blob_dim" => self.blob_dim = Some(parse_num(key, v)?),
            "data.blob_spread" => self.blob_spread = Some(parse_num(key, v)?),
            "data.classes" => self.classes = parse_num(key, v)?,
            "permuted.tasks" => self.permuted_tasks = parse_num(key, v)?,
            "trainer.lambda" => self.lambda = Some(parse_num(key, v)?),
            "trainer.beta" => self.beta = parse_num(key, v)?,
            "trainer.lambda_w" => self.lambda_w = parse_num(key, v)?,
            "trainer.replay_fraction" => {
                self.replay_fraction = parse_num(key, v)?;
                if !(0.0..=1.0).contains(&self.replay_fraction) {
                    return Err(CwError::Config("replay_fraction outside [0,1]".into()));
                }
            }
            "trainer.generator_cold_start" => self.generator_cold_start = parse_bool(key, v)?,
            "train.epochs" => self.epochs = Some(parse_num(key, v)?),
            "train.batch_size" => self.batch_size = parse_num(key, v)?,
            "train.lr_first" => self.lr_first = parse_num(key, v)?,
            "train.lr_later" => self.lr_later = Some(parse_num(key, v)?),
            "train.sgd_lr" => self.sgd_lr = parse_num(key, v)?,
            "train.adagrad_lr" => self.adagrad_lr = parse_num(key, v)?,
            "generator.epochs" => self.generator_epochs = parse_num(key, v)?,
            "generator.lr" => self.generator_lr = Some(parse_num(key, v)?),
            "grid.lambdas" => self.grid_lambdas = parse_list(key, v)?,
            "grid.betas" => self.grid_betas = parse_list(key, v)?,
            "grid.seeds" => self.grid_seeds = parse_num(key, v)?,
            _ => return Err(CwError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment, blank lines skip.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CwError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Fully-resolved echo in config syntax, stable across reruns.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario.name());
        let _ = writeln!(s, "stream = {}", self.stream.name());
        let _ = writeln!(s, "profile = {}", self.profile.name());
        let _ = writeln!(s, "method = {}", self.method.name());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(
            s,
            "data.source = {}",
            match self.data_source {
                DataSource::Synthetic => "synthetic",
                DataSource::Idx => "idx",
            }
        );
        let _ = writeln!(s, "data.dir = {}", self.data_dir.display());
        let _ = writeln!(s, "data.seed = {}", self.data_seed);
        let _ = writeln!(
            s,
            "data.train_per_class = {}",
            self.train_per_class.unwrap_or(0)
        );
        let _ = writeln!(
            s,
            "data.test_per_class = {}",
            self.test_per_class.unwrap_or(0)
        );
        match self.blob_dim {
            Some(d) => {
                let _ = writeln!(s, "data.blob_dim = {d}");
            }
            None => {
                let _ = writeln!(s, "# data.blob_dim defaulted per scenario");
            }
        }
        match self.blob_spread {
            Some(v) => {
                let _ = writeln!(s, "data.blob_spread = {v}");
            }
            None => {
                let _ = writeln!(s, "# data.blob_spread defaulted per scenario");
            }
        }
        let _ = writeln!(s, "data.classes = {}", self.classes);
        let _ = writeln!(s, "permuted.tasks = {}", self.permuted_tasks);
        match self.lambda {
            Some(l) => {
                let _ = writeln!(s, "trainer.lambda = {l}");
            }
            None => {
                let _ = writeln!(s, "# trainer.lambda defaulted per scenario");
            }
        }
        let _ = writeln!(s, "trainer.beta = {}", self.beta);
        let _ = writeln!(s, "trainer.lambda_w = {}", self.lambda_w);
        let _ = writeln!(s, "trainer.replay_fraction = {}", self.replay_fraction);
        let _ = writeln!(
            s,
            "trainer.generator_cold_start = {}",
            self.generator_cold_start
        );
        match self.epochs {
            Some(e) => {
                let _ = writeln!(s, "train.epochs = {e}");
            }
            None => {
                let _ = writeln!(s, "# train.epochs defaulted per profile");
            }
        }
        let _ = writeln!(s, "train.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "train.lr_first = {}", self.lr_first);
        match self.lr_later {
            Some(v) => {
                let _ = writeln!(s, "train.lr_later = {v}");
            }
            None => {
                let _ = writeln!(s, "# train.lr_later defaulted per profile and scenario");
            }
        }
        let _ = writeln!(s, "train.sgd_lr = {}", self.sgd_lr);
        let _ = writeln!(s, "train.adagrad_lr = {}", self.adagrad_lr);
        let _ = writeln!(s, "generator.epochs = {}", self.generator_epochs);
        match self.generator_lr {
            Some(v) => {
                let _ = writeln!(s, "generator.lr = {v}");
            }
            None => {
                let _ = writeln!(s, "# generator.lr defaulted per profile");
            }
        }
        let lambdas: Vec<String> = self.grid_lambdas.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "grid.lambdas = {}", lambdas.join(","));
        let betas: Vec<String> = self.grid_betas.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "grid.betas = {}", betas.join(","));
        let _ = writeln!(s, "grid.seeds = {}", self.grid_seeds);
        s
    }
}
