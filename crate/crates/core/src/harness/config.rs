//! Experiment configuration.
//!
//! Files are flat TOML: `section.key = value` lines, or the equivalent
//! `[section]` tables. Sections are `task`, `data`, `optimizer`, `train`,
//! `output`, `sweep` and `debug`; every accepted key is listed in
//! [`KNOWN_KEYS`]. Unknown keys are errors. A sweep axis is any field path
//! under `sweep`, e.g. `sweep.clip_upper = [1, 3, 5, 10, inf]`; a bare field
//! name resolves to the unique full path ending in it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::model::Activation;
use crate::optim::{parse_extended, Algorithm, BiasCorrection, BoundSchedule, OptimizerConfig, TrustRatioDenominator};
use crate::tasks::TaskSpec;

/// Every settable field path.
pub const KNOWN_KEYS: &[&str] = &[
    "task.kind",
    "task.dim",
    "task.condition",
    "task.offset",
    "task.inputs",
    "task.outputs",
    "task.noise",
    "task.margin",
    "task.widths",
    "task.activation",
    "data.source",
    "data.dataset",
    "data.overlap",
    "data.n_train",
    "data.n_test",
    "data.batch_size",
    "data.drop_last",
    "data.train_path",
    "data.test_path",
    "data.header",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "optimizer.algorithm",
    "optimizer.lr",
    "optimizer.warmup_steps",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "optimizer.weight_decay",
    "optimizer.momentum",
    "optimizer.clip_enabled",
    "optimizer.clip_lower",
    "optimizer.clip_upper",
    "optimizer.bound_schedule",
    "optimizer.bound_rate",
    "optimizer.bias_correction",
    "optimizer.trust_ratio_denominator",
    "optimizer.exclude_bias_from_decay",
    "optimizer.force_unit_trust_ratio",
    "train.epochs",
    "train.seed",
    "output.dir",
    "output.run_id",
    "debug.corrupt_gradient",
    "debug.gradcheck_points",
    "debug.gradcheck_step",
    "debug.gradcheck_batch",
];

/// Minibatch size, possibly relative to the training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BatchSize {
    Full,
    /// `N / k`, rounded down (at least 1).
    Fraction(usize),
    Fixed(usize),
}

impl BatchSize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Full => n,
            BatchSize::Fraction(k) => (n / k).max(1),
            BatchSize::Fixed(b) => b,
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Fraction(k) => write!(f, "n/{k}"),
            BatchSize::Fixed(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::config(
                "data.batch_size",
                format!("expected `full`, `n/<k>` or a positive integer, got `{s}`"),
            )
        };
        let s = s.trim().to_ascii_lowercase();
        if s == "full" || s == "n" {
            return Ok(BatchSize::Full);
        }
        if let Some(k) = s.strip_prefix("n/") {
            let k: usize = k.parse().map_err(|_| bad())?;
            return if k == 0 { Err(bad()) } else { Ok(BatchSize::Fraction(k)) };
        }
        match s.parse::<usize>() {
            Ok(b) if b > 0 => Ok(BatchSize::Fixed(b)),
            _ => Err(bad()),
        }
    }
}

impl From<BatchSize> for String {
    fn from(b: BatchSize) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BatchSize {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    /// Generated from the task. `dataset` overrides the default family.
    Synthetic { dataset: Option<DatasetSpec> },
    Csv {
        train_path: PathBuf,
        test_path: Option<PathBuf>,
        header: bool,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub n_train: usize,
    pub n_test: usize,
    pub batch_size: BatchSize,
    pub drop_last: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    pub max_runs: usize,
    /// Axis whose values become report columns.
    pub column: Option<String>,
    pub baseline: Option<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugConfig {
    /// Layer whose analytic gradient `gradcheck` deliberately perturbs.
    pub corrupt_gradient: Option<String>,
    pub gradcheck_points: usize,
    pub gradcheck_step: f64,
    pub gradcheck_batch: usize,
}

/// One expanded sweep run and its `(field path, value)` assignments.
pub type SweepPoint = (ExperimentConfig, Vec<(String, String)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub data: DataConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub debug: DebugConfig,
    /// Apply weight decay to layers named `*bias`.
    #[serde(default)]
    pub exclude_bias_from_decay: bool,
}

fn default_task(kind: &str) -> Result<TaskSpec> {
    Ok(match kind {
        "quadratic" => TaskSpec::Quadratic {
            dim: 10,
            condition: 100.0,
            offset: 0.0,
        },
        "linear" | "linear-regression" | "linear_regression" => TaskSpec::LinearRegression {
            inputs: 8,
            outputs: 1,
            noise: 0.0,
        },
        "logistic" => TaskSpec::Logistic {
            inputs: 16,
            margin: 0.05,
        },
        "mlp" => TaskSpec::Mlp {
            widths: vec![16, 32, 32, 2],
            activation: Activation::Relu,
            margin: 0.05,
        },
        other => {
            return Err(Error::config(
                "task.kind",
                format!("unknown task `{other}` (expected quadratic, linear, logistic or mlp)"),
            ))
        }
    })
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: default_task("mlp").expect("built-in task"),
            data: DataConfig {
                source: DataSource::Synthetic { dataset: None },
                n_train: 2048,
                n_test: 512,
                batch_size: BatchSize::Full,
                drop_last: false,
            },
            optimizer: OptimizerConfig::new(Algorithm::Lambc),
            train: TrainConfig { epochs: 80, seed: 0 },
            output: OutputConfig {
                dir: PathBuf::from("runs"),
                run_id: "run".into(),
            },
            sweep: SweepConfig {
                axes: Vec::new(),
                max_runs: 64,
                column: None,
                baseline: None,
                threshold: 0.9,
            },
            debug: DebugConfig {
                corrupt_gradient: None,
                gradcheck_points: 10,
                gradcheck_step: 1e-5,
                gradcheck_batch: 16,
            },
            exclude_bias_from_decay: false,
        }
    }
}

/// Renders a TOML value the way it appears in labels and run ids.
fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) if f.is_infinite() => if *f > 0.0 { "inf" } else { "-inf" }.into(),
        Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => {
            parse_extended(s).ok_or_else(|| Error::config(key, format!("expected a number, got `{s}`")))
        }
        other => Err(Error::config(key, format!("expected a number, got {other}"))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => s
            .parse()
            .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{s}`"))),
        other => Err(Error::config(
            key,
            format!("expected a non-negative integer, got {other}"),
        )),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    match v {
        Value::Boolean(b) => Ok(*b),
        Value::String(s) if s == "true" || s == "false" => Ok(s == "true"),
        other => Err(Error::config(key, format!("expected true or false, got {other}"))),
    }
}

fn as_string(key: &str, v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Integer(_) | Value::Float(_) => Ok(value_text(v)),
        other => Err(Error::config(key, format!("expected a string, got {other}"))),
    }
}

fn as_usize_list(key: &str, v: &Value) -> Result<Vec<usize>> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_usize(key, x)).collect(),
        Value::String(s) => s
            .split(|c: char| c == ',' || c == '-' || c == 'x' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| Error::config(key, format!("bad width `{p}`"))))
            .collect(),
        other => Err(Error::config(key, format!("expected a list of integers, got {other}"))),
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, v: &Value) -> Result<T> {
    let s = as_string(key, v)?;
    serde_json::from_value(serde_json::Value::String(s.clone()))
        .map_err(|_| Error::config(key, format!("unsupported value `{s}`")))
}

/// Parses an override's right-hand side as TOML, falling back to a bare
/// string (`--set task.kind=mlp`).
pub fn parse_value(text: &str) -> Value {
    let text = text.trim();
    match toml::from_str::<Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.into())),
        Err(_) => Value::String(text.into()),
    }
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Full field path for a (possibly bare) sweep axis name.
pub fn resolve_field(name: &str) -> Result<String> {
    if KNOWN_KEYS.contains(&name) {
        return Ok(name.to_string());
    }
    let matches: Vec<&&str> = KNOWN_KEYS
        .iter()
        .filter(|k| k.rsplit('.').next() == Some(name))
        .collect();
    match matches.as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(Error::config(format!("sweep.{name}"), "not a configurable field")),
        _ => Err(Error::config(
            format!("sweep.{name}"),
            "ambiguous field name; use the full path",
        )),
    }
}

impl ExperimentConfig {
    /// Reads a config file and applies `overrides` (`section.key=value`).
    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let table: Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| Error::config(ov.clone(), "override must look like section.key=value"))?;
            entries.push((k.trim().to_string(), parse_value(v)));
        }
        let mut cfg = ExperimentConfig::default();
        // The task kind decides which other task keys are valid.
        for (k, v) in entries.iter().filter(|(k, _)| k == "task.kind") {
            cfg.set(k, v)?;
        }
        for (k, v) in entries.iter().filter(|(k, _)| k != "task.kind") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field by path.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        if let Some(rest) = key.strip_prefix("sweep.") {
            return self.set_sweep(rest, key, v);
        }
        let o = &mut self.optimizer;
        match key {
            "task.kind" => {
                let kind = as_string(key, v)?;
                if kind != self.task.kind() {
                    self.task = default_task(&kind)?;
                }
            }
            k if k.starts_with("task.") => self.set_task(k, v)?,
            "data.source" => {
                self.data.source = match as_string(key, v)?.as_str() {
                    "synthetic" => DataSource::Synthetic { dataset: None },
                    "csv" => DataSource::Csv {
                        train_path: PathBuf::new(),
                        test_path: None,
                        header: false,
                    },
                    "idx" => DataSource::Idx {
                        train_images: PathBuf::new(),
                        train_labels: PathBuf::new(),
                        test_images: None,
                        test_labels: None,
                    },
                    other => return Err(Error::config(key, format!("unknown source `{other}`"))),
                }
            }
            "data.dataset" | "data.overlap" => self.set_dataset(key, v)?,
            "data.n_train" => self.data.n_train = as_usize(key, v)?,
            "data.n_test" => self.data.n_test = as_usize(key, v)?,
            "data.batch_size" => self.data.batch_size = as_string(key, v)?.parse()?,
            "data.drop_last" => self.data.drop_last = as_bool(key, v)?,
            "data.train_path" | "data.test_path" | "data.header" => match &mut self.data.source {
                DataSource::Csv {
                    train_path,
                    test_path,
                    header,
                } => match key {
                    "data.train_path" => *train_path = as_string(key, v)?.into(),
                    "data.test_path" => *test_path = Some(as_string(key, v)?.into()),
                    _ => *header = as_bool(key, v)?,
                },
                _ => {
                    return Err(Error::config(
                        key,
                        "only valid with data.source = \"csv\" (set it first)",
                    ))
                }
            },
            "data.train_images" | "data.train_labels" | "data.test_images" | "data.test_labels" => {
                match &mut self.data.source {
                    DataSource::Idx {
                        train_images,
                        train_labels,
                        test_images,
                        test_labels,
                    } => {
                        let p = PathBuf::from(as_string(key, v)?);
                        match key {
                            "data.train_images" => *train_images = p,
                            "data.train_labels" => *train_labels = p,
                            "data.test_images" => *test_images = Some(p),
                            _ => *test_labels = Some(p),
                        }
                    }
                    _ => {
                        return Err(Error::config(
                            key,
                            "only valid with data.source = \"idx\" (set it first)",
                        ))
                    }
                }
            }
            "optimizer.algorithm" => {
                let algo: Algorithm = as_string(key, v)?.parse()?;
                *o = o.clone().with_algorithm(algo);
            }
            "optimizer.lr" => o.lr = as_f64(key, v)?,
            "optimizer.warmup_steps" => o.warmup_steps = as_u64(key, v)?,
            "optimizer.beta1" => o.beta1 = as_f64(key, v)?,
            "optimizer.beta2" => o.beta2 = as_f64(key, v)?,
            "optimizer.eps" => o.eps = as_f64(key, v)?,
            "optimizer.weight_decay" => o.weight_decay = as_f64(key, v)?,
            "optimizer.momentum" => o.momentum = as_f64(key, v)?,
            "optimizer.clip_enabled" => o.clip_enabled = as_bool(key, v)?,
            "optimizer.clip_lower" => o.clip_lower = as_f64(key, v)?,
            "optimizer.clip_upper" => o.clip_upper = as_f64(key, v)?,
            "optimizer.bound_schedule" => {
                o.bound_schedule = match as_string(key, v)?.as_str() {
                    "constant" => BoundSchedule::Constant,
                    "envelope" => match o.bound_schedule {
                        BoundSchedule::Envelope { rate } => BoundSchedule::Envelope { rate },
                        BoundSchedule::Constant => BoundSchedule::Envelope { rate: 1.0 },
                    },
                    other => return Err(Error::config(key, format!("unknown schedule `{other}`"))),
                }
            }
            "optimizer.bound_rate" => {
                let rate = as_f64(key, v)?;
                if !(rate > 0.0) {
                    return Err(Error::config(key, format!("must be positive, got {rate}")));
                }
                o.bound_schedule = BoundSchedule::Envelope { rate };
            }
            "optimizer.bias_correction" => o.bias_correction = parse_enum::<BiasCorrection>(key, v)?,
            "optimizer.trust_ratio_denominator" => {
                o.trust_ratio_denominator = parse_enum::<TrustRatioDenominator>(key, v)?
            }
            "optimizer.exclude_bias_from_decay" => self.exclude_bias_from_decay = as_bool(key, v)?,
            "optimizer.force_unit_trust_ratio" => o.force_unit_trust_ratio = as_bool(key, v)?,
            "train.epochs" => self.train.epochs = as_usize(key, v)?,
            "train.seed" => self.train.seed = as_u64(key, v)?,
            "output.dir" => self.output.dir = as_string(key, v)?.into(),
            "output.run_id" => self.output.run_id = as_string(key, v)?,
            "debug.corrupt_gradient" => {
                let s = as_string(key, v)?;
                self.debug.corrupt_gradient = (!s.is_empty()).then_some(s);
            }
            "debug.gradcheck_points" => self.debug.gradcheck_points = as_usize(key, v)?,
            "debug.gradcheck_step" => self.debug.gradcheck_step = as_f64(key, v)?,
            "debug.gradcheck_batch" => self.debug.gradcheck_batch = as_usize(key, v)?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    fn set_sweep(&mut self, rest: &str, key: &str, v: &Value) -> Result<()> {
        match rest {
            "max_runs" => self.sweep.max_runs = as_usize(key, v)?,
            "column" => self.sweep.column = Some(resolve_field(&as_string(key, v)?)?),
            "baseline" => self.sweep.baseline = Some(as_string(key, v)?),
            "threshold" => self.sweep.threshold = as_f64(key, v)?,
            field => {
                let path = resolve_field(field)?;
                let values: Vec<String> = match v {
                    Value::Array(items) => items.iter().map(value_text).collect(),
                    single => vec![value_text(single)],
                };
                if values.is_empty() {
                    return Err(Error::config(key, "sweep axis has no values"));
                }
                // Each value must be applicable on its own.
                for val in &values {
                    self.clone().set(&path, &parse_value(val))?;
                }
                self.sweep.axes.retain(|a| a.path != path);
                self.sweep.axes.push(SweepAxis { path, values });
            }
        }
        Ok(())
    }

    fn set_task(&mut self, key: &str, v: &Value) -> Result<()> {
        let kind = self.task.kind();
        let wrong = || Error::config(key, format!("not a parameter of task kind `{kind}`"));
        match (&mut self.task, key) {
            (TaskSpec::Quadratic { dim, .. }, "task.dim") => *dim = as_usize(key, v)?,
            (TaskSpec::Quadratic { condition, .. }, "task.condition") => *condition = as_f64(key, v)?,
            (TaskSpec::Quadratic { offset, .. }, "task.offset") => *offset = as_f64(key, v)?,
            (TaskSpec::LinearRegression { inputs, .. } | TaskSpec::Logistic { inputs, .. }, "task.inputs") => {
                *inputs = as_usize(key, v)?
            }
            (TaskSpec::LinearRegression { outputs, .. }, "task.outputs") => *outputs = as_usize(key, v)?,
            (TaskSpec::LinearRegression { noise, .. }, "task.noise") => *noise = as_f64(key, v)?,
            (TaskSpec::Logistic { margin, .. } | TaskSpec::Mlp { margin, .. }, "task.margin") => {
                *margin = as_f64(key, v)?
            }
            (TaskSpec::Mlp { widths, .. }, "task.widths") => *widths = as_usize_list(key, v)?,
            (TaskSpec::Mlp { activation, .. }, "task.activation") => *activation = as_string(key, v)?.parse()?,
            (_, k) if KNOWN_KEYS.contains(&k) => return Err(wrong()),
            (_, k) => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    fn set_dataset(&mut self, key: &str, v: &Value) -> Result<()> {
        let DataSource::Synthetic { dataset } = &mut self.data.source else {
            return Err(Error::config(key, "only valid for synthetic data"));
        };
        match key {
            "data.dataset" => {
                *dataset = match as_string(key, v)?.as_str() {
                    "default" | "planted" => None,
                    "two_gaussians" | "two-gaussians" => Some(DatasetSpec::TwoGaussians {
                        features: 0,
                        overlap: 0.0,
                    }),
                    other => return Err(Error::config(key, format!("unknown dataset `{other}`"))),
                }
            }
            _ => match dataset {
                Some(DatasetSpec::TwoGaussians { overlap, .. }) => *overlap = as_f64(key, v)?,
                _ => return Err(Error::config(key, "only valid with data.dataset = \"two_gaussians\"")),
            },
        }
        Ok(())
    }

    /// Dataset family for synthetic runs, with widths filled in from the task.
    pub fn dataset_spec(&self) -> Option<DatasetSpec> {
        let DataSource::Synthetic { dataset } = &self.data.source else {
            return None;
        };
        match dataset {
            Some(DatasetSpec::TwoGaussians { overlap, .. }) => Some(DatasetSpec::TwoGaussians {
                features: match &self.task {
                    TaskSpec::Mlp { widths, .. } => widths[0],
                    TaskSpec::Logistic { inputs, .. } | TaskSpec::LinearRegression { inputs, .. } => *inputs,
                    TaskSpec::Quadratic { dim, .. } => *dim,
                },
                overlap: *overlap,
            }),
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.optimizer.validate()?;
        if self.train.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.data.n_train == 0 {
            return Err(Error::config("data.n_train", "must be at least 1"));
        }
        if let Some(DatasetSpec::TwoGaussians { .. }) = self.dataset_spec() {
            let two_class = match &self.task {
                TaskSpec::Logistic { .. } => true,
                TaskSpec::Mlp { widths, .. } => widths[widths.len() - 1] == 2,
                _ => false,
            };
            if !two_class {
                return Err(Error::config("data.dataset", "two_gaussians needs a two-class model"));
            }
        }
        match &self.data.source {
            DataSource::Csv { train_path, .. } if train_path.as_os_str().is_empty() => {
                return Err(Error::config("data.train_path", "required for csv data"));
            }
            DataSource::Idx {
                train_images,
                train_labels,
                ..
            } if train_images.as_os_str().is_empty() || train_labels.as_os_str().is_empty() => {
                return Err(Error::config(
                    "data.train_images",
                    "idx data needs train_images and train_labels",
                ));
            }
            _ => {}
        }
        if self.sweep.max_runs == 0 {
            return Err(Error::config("sweep.max_runs", "must be at least 1"));
        }
        if let Some(col) = &self.sweep.column {
            if !self.sweep.axes.iter().any(|a| &a.path == col) {
                return Err(Error::config("sweep.column", format!("`{col}` is not a sweep axis")));
            }
        }
        if !(self.debug.gradcheck_step > 0.0) {
            return Err(Error::config("debug.gradcheck_step", "must be positive"));
        }
        Ok(())
    }

    /// Current value of a field path, as text.
    pub fn field_value(&self, path: &str) -> Result<String> {
        let o = &self.optimizer;
        let fmt_f = |x: f64| {
            if x.is_infinite() {
                "inf".to_string()
            } else {
                format!("{x}")
            }
        };
        Ok(match path {
            "task.kind" => self.task.kind().into(),
            "data.n_train" => self.data.n_train.to_string(),
            "data.n_test" => self.data.n_test.to_string(),
            "data.batch_size" => self.data.batch_size.to_string(),
            "data.drop_last" => self.data.drop_last.to_string(),
            "optimizer.algorithm" => o.algorithm.to_string(),
            "optimizer.lr" => fmt_f(o.lr),
            "optimizer.warmup_steps" => o.warmup_steps.to_string(),
            "optimizer.beta1" => fmt_f(o.beta1),
            "optimizer.beta2" => fmt_f(o.beta2),
            "optimizer.eps" => fmt_f(o.eps),
            "optimizer.weight_decay" => fmt_f(o.weight_decay),
            "optimizer.momentum" => fmt_f(o.momentum),
            "optimizer.clip_enabled" => o.clip_enabled.to_string(),
            "optimizer.clip_lower" => fmt_f(o.clip_lower),
            "optimizer.clip_upper" => fmt_f(o.clip_upper),
            "optimizer.bound_schedule" => match o.bound_schedule {
                BoundSchedule::Constant => "constant".into(),
                BoundSchedule::Envelope { .. } => "envelope".into(),
            },
            "optimizer.bound_rate" => match o.bound_schedule {
                BoundSchedule::Envelope { rate } => fmt_f(rate),
                BoundSchedule::Constant => String::new(),
            },
            "optimizer.bias_correction" => serde_json::to_value(o.bias_correction)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            "optimizer.trust_ratio_denominator" => serde_json::to_value(o.trust_ratio_denominator)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            "optimizer.exclude_bias_from_decay" => self.exclude_bias_from_decay.to_string(),
            "optimizer.force_unit_trust_ratio" => o.force_unit_trust_ratio.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "output.run_id" => self.output.run_id.clone(),
            other if other.starts_with("task.") => {
                let json = serde_json::to_value(&self.task).map_err(|e| Error::config(other, e.to_string()))?;
                let field = &other["task.".len()..];
                match json.get(field) {
                    Some(serde_json::Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                    None => {
                        return Err(Error::config(
                            other,
                            format!("not a parameter of task `{}`", self.task.kind()),
                        ))
                    }
                }
            }
            other => return Err(Error::config(other, "field has no comparable value")),
        })
    }

    /// Cartesian product of the sweep axes, first axis outermost. Each
    /// element is a single-run config plus its `(path, value)` assignments.
    pub fn expand_sweep(&self) -> Result<Vec<SweepPoint>> {
        if self.sweep.axes.is_empty() {
            return Err(Error::config("sweep", "no sweep axes configured"));
        }
        let total = self
            .sweep
            .axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()))
            .unwrap_or(usize::MAX);
        if total > self.sweep.max_runs {
            return Err(Error::config(
                "sweep.max_runs",
                format!("sweep would launch {total} runs, cap is {}", self.sweep.max_runs),
            ));
        }
        let mut out: Vec<SweepPoint> = vec![(self.clone(), Vec::new())];
        for axis in &self.sweep.axes {
            let mut next = Vec::with_capacity(out.len() * axis.values.len());
            for (cfg, labels) in &out {
                for value in &axis.values {
                    let mut c = cfg.clone();
                    c.set(&axis.path, &parse_value(value))?;
                    let mut l = labels.clone();
                    l.push((axis.path.clone(), value.clone()));
                    next.push((c, l));
                }
            }
            out = next;
        }
        out.into_iter()
            .enumerate()
            .map(|(i, (mut cfg, labels))| {
                let tag: Vec<String> = labels
                    .iter()
                    .map(|(p, v)| format!("{}={}", p.rsplit('.').next().unwrap_or(p), v.replace('/', "-")))
                    .collect();
                cfg.output.run_id = format!("{i:03}_{}", tag.join("_"));
                cfg.output.dir = self.output.dir.join(&cfg.output.run_id);
                cfg.sweep.axes.clear();
                cfg.sweep.column = None;
                cfg.validate()?;
                Ok((cfg, labels))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::config("<config>", e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            source_name: path.display().to_string(),
            location: format!("line {}", e.line()),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::parse("task.kind = \"logistic\"\noptimizer.algorithm = \"lambc\"\n", &[]).unwrap();
        let o = &cfg.optimizer;
        assert_eq!(o.eps, 1e-6);
        assert_eq!(o.weight_decay, 0.0);
        assert_eq!(o.clip_lower, 0.0);
        assert_eq!(o.clip_upper, 1.0);
        assert_eq!(o.bias_correction, BiasCorrection::PaperConstant);
        assert!(o.clip_enabled);
        assert_eq!(cfg.task.kind(), "logistic");
    }

    #[test]
    fn beta1_of_one_is_rejected() {
        let err = ExperimentConfig::parse("optimizer.beta1 = 1.0", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "optimizer.beta1"));
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let err = ExperimentConfig::parse("optimizer.learning_rate = 0.1", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "optimizer.learning_rate"));
        let err = ExperimentConfig::parse("optimizer.lr = \"fast\"", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "optimizer.lr"));
        let err = ExperimentConfig::parse("task.kind = \"mlp\"\ntask.dim = 3", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "task.dim"));
    }

    #[test]
    fn clip_sweep_generates_four_runs() {
        let cfg = ExperimentConfig::parse("sweep.clip_upper = [1, 3, 5, 10]", &[]).unwrap();
        let runs = cfg.expand_sweep().unwrap();
        assert_eq!(runs.len(), 4);
        let uppers: Vec<f64> = runs.iter().map(|(c, _)| c.optimizer.clip_upper).collect();
        assert_eq!(uppers, vec![1.0, 3.0, 5.0, 10.0]);
        assert_eq!(runs[0].1, vec![("optimizer.clip_upper".to_string(), "1".to_string())]);
    }

    #[test]
    fn sweep_order_is_axis_then_value() {
        let text = "[sweep]\nalgorithm = [\"lamb\", \"lambc\"]\nbatch_size = [\"full\", \"n/2\", \"n/4\"]\n";
        let runs = ExperimentConfig::parse(text, &[]).unwrap().expand_sweep().unwrap();
        let ids: Vec<&str> = runs.iter().map(|(c, _)| c.output.run_id.as_str()).collect();
        assert_eq!(ids[0], "000_algorithm=lamb_batch_size=full");
        assert_eq!(ids[1], "001_algorithm=lamb_batch_size=n-2");
        assert_eq!(ids[3], "003_algorithm=lambc_batch_size=full");
        assert!(!runs[0].0.optimizer.clip_enabled && runs[3].0.optimizer.clip_enabled);
    }

    #[test]
    fn sweep_cap_and_empty_axes() {
        let cfg = ExperimentConfig::parse(
            "sweep.seed = [1,2,3,4,5]\nsweep.lr = [0.1, 0.2]\nsweep.max_runs = 8",
            &[],
        )
        .unwrap();
        assert!(matches!(cfg.expand_sweep(), Err(Error::Config { .. })));
        let cfg = ExperimentConfig::default();
        assert!(matches!(cfg.expand_sweep(), Err(Error::Config { .. })));
        assert!(ExperimentConfig::parse("sweep.clip_upper = []", &[]).is_err());
    }

    #[test]
    fn overrides_apply_after_file() {
        let cfg = ExperimentConfig::parse(
            "optimizer.lr = 0.5",
            &[
                "optimizer.lr=0.25".into(),
                "task.kind=quadratic".into(),
                "optimizer.clip_upper=inf".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.optimizer.lr, 0.25);
        assert_eq!(cfg.task.kind(), "quadratic");
        assert_eq!(cfg.optimizer.clip_upper, f64::INFINITY);
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = ExperimentConfig::parse(
            "optimizer.clip_upper = inf\ndata.batch_size = \"n/4\"\noptimizer.bound_rate = 0.5\n",
            &[],
        )
        .unwrap();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn batch_size_forms() {
        assert_eq!("full".parse::<BatchSize>().unwrap().resolve(100), 100);
        assert_eq!("n/4".parse::<BatchSize>().unwrap().resolve(100), 25);
        assert_eq!("64".parse::<BatchSize>().unwrap().resolve(100), 64);
        assert!("n/0".parse::<BatchSize>().is_err());
        assert!("0".parse::<BatchSize>().is_err());
    }

    #[test]
    fn ambiguous_bare_names_need_full_path() {
        // `margin` belongs only to task; `batch_size` only to data.
        assert_eq!(resolve_field("margin").unwrap(), "task.margin");
        assert!(resolve_field("nonexistent").is_err());
    }
}
