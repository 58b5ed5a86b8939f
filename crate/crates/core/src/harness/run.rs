//! Training runs, sweeps, gradient checks and telemetry audits.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{batches, derive_seed, load_csv, load_idx, rng_for, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::harness::config::{DataSource, ExperimentConfig};
use crate::model::Model;
use crate::optim::{Optimizer, TrustRatioRecord};
use crate::tasks::{backward, finite_diff_grad, forward, loss_and_grad, make_task, TaskSpec};
use crate::telemetry::{
    compare_runs, read_trust_ratios, record_step, write_outputs, write_report, ComparisonReport, ComparisonSpec,
    RunLog, StepRow, CONFIG_FILE, TRUST_RATIOS_FILE,
};
use crate::tensor::norm_of;

/// Parameter budget above which `gradcheck` refuses to run.
pub const GRADCHECK_MAX_PARAMS: usize = 10_000;
/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;
/// Absolute tolerance when `audit` recomputes raw trust ratios.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

fn input_width(spec: &TaskSpec) -> usize {
    match spec {
        TaskSpec::Quadratic { dim, .. } => *dim,
        TaskSpec::LinearRegression { inputs, .. } | TaskSpec::Logistic { inputs, .. } => *inputs,
        TaskSpec::Mlp { widths, .. } => widths[0],
    }
}

/// Initial model plus training and optional test data for `config`.
pub fn prepare(config: &ExperimentConfig) -> Result<(Model, Dataset, Option<Dataset>)> {
    config.validate()?;
    let task = make_task(&config.task, config.train.seed)?;
    let (train, test) = match &config.data.source {
        DataSource::Synthetic { .. } => {
            task.datasets(config.dataset_spec().as_ref(), config.data.n_train, config.data.n_test)?
        }
        DataSource::Csv {
            train_path,
            test_path,
            header,
        } => (
            load_csv(train_path, *header)?,
            test_path.as_ref().map(|p| load_csv(p, *header)).transpose()?,
        ),
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let test = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l)?),
                (None, None) => None,
                _ => {
                    return Err(Error::config(
                        "data.test_images",
                        "give both test_images and test_labels",
                    ))
                }
            };
            (load_idx(train_images, train_labels)?, test)
        }
    };
    let want = input_width(&config.task);
    for ds in std::iter::once(&train).chain(test.as_ref()) {
        if ds.feature_width() != want {
            return Err(Error::config(
                "data",
                format!("data has {} features but the task expects {want}", ds.feature_width()),
            ));
        }
    }
    let mut model = task.model;
    if config.exclude_bias_from_decay {
        for layer in model.layers_mut() {
            layer.exclude_from_decay = layer.is_bias();
        }
    }
    Ok((model, train, test))
}

/// Trains without touching the filesystem. Returns the log and final model.
pub fn train(config: &ExperimentConfig) -> Result<(RunLog, Model)> {
    let (mut model, train_set, test_set) = prepare(config)?;
    let plan = BatchPlan {
        batch_size: config.data.batch_size.resolve(train_set.len()),
        epochs: config.train.epochs,
        seed: derive_seed(config.train.seed, 4),
        drop_last: config.data.drop_last,
    };
    plan.validate(train_set.len())?;
    let mut optimizer = Optimizer::new(config.optimizer.clone())?;
    let mut log = RunLog::new(config.output.run_id.clone(), config.clone(), model.layer_count());
    let test_batch = test_set.as_ref().map(Dataset::as_batch);
    let start = Instant::now();

    for planned in batches(&train_set, plan)? {
        let step = optimizer.step_count() + 1;
        let (value, grads) = loss_and_grad(&model, &planned.batch).map_err(|e| diverged(e, step))?;
        let outcome = optimizer.step(&mut model, &grads, Some(value.loss))?;
        let (test_loss, test_accuracy) = match (&test_batch, planned.last_in_epoch) {
            (Some(tb), true) => {
                let tv = forward(&model, tb).map_err(|e| diverged(e, step))?;
                (Some(tv.loss), tv.accuracy)
            }
            _ => (None, None),
        };
        let row = StepRow {
            step: outcome.step,
            epoch: planned.epoch,
            train_loss: value.loss,
            train_accuracy: value.accuracy,
            test_loss,
            test_accuracy,
            wall_clock: start.elapsed(),
        };
        record_step(&mut log, row, outcome.records)?;
    }
    Ok((log, model))
}

fn diverged(e: Error, step: u64) -> Error {
    match e {
        Error::Numerical(_) => Error::Divergence {
            layer: "loss".into(),
            step,
            what: "loss",
        },
        other => other,
    }
}

/// Trains and writes `metrics.csv`, `trust_ratios.csv` and `config.json`
/// into `config.output.dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunLog> {
    let (log, _) = train(config)?;
    write_outputs(&log, &config.output.dir)?;
    Ok(log)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<RunLog>,
    pub report: ComparisonReport,
    pub report_files: Vec<PathBuf>,
}

/// Runs every point of the sweep in parallel, writing each run to
/// `<output.dir>/<run_id>/` and the comparison to `<output.dir>/report.*`.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    let points = config.expand_sweep()?;
    let runs: Vec<RunLog> = points.par_iter().map(|(cfg, _)| run(cfg)).collect::<Result<Vec<_>>>()?;
    let axes: Vec<String> = config.sweep.axes.iter().map(|a| a.path.clone()).collect();
    let column_axis = config
        .sweep
        .column
        .clone()
        .or_else(|| axes.iter().find(|a| a.as_str() == "data.batch_size").cloned());
    let spec = ComparisonSpec {
        axes,
        column_axis,
        baseline: config.sweep.baseline.clone(),
        threshold: config.sweep.threshold,
    };
    let report = compare_runs(&runs, &spec)?;
    let report_files = write_report(&report, &config.output.dir)?;
    Ok(SweepOutcome {
        runs,
        report,
        report_files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub point: usize,
    pub layer: String,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failing_layers(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .rows
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.layer.as_str())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Layer-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)`; zero when both
/// gradients vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm_of(analytic).max(norm_of(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm_of(&diff) / scale
    }
}

/// Compares analytic and central-difference gradients at
/// `debug.gradcheck_points` parameter points: the initialization, then
/// uniform draws from [-1, 1].
pub fn gradcheck(config: &ExperimentConfig) -> Result<GradcheckReport> {
    let (model, train_set, _) = prepare(config)?;
    let params = model.parameter_count();
    if params > GRADCHECK_MAX_PARAMS {
        return Err(Error::config(
            "task",
            format!("gradcheck is limited to {GRADCHECK_MAX_PARAMS} parameters, model has {params}"),
        ));
    }
    if let Some(name) = &config.debug.corrupt_gradient {
        if model.layer(name).is_none() {
            return Err(Error::config(
                "debug.corrupt_gradient",
                format!("no layer named `{name}`"),
            ));
        }
    }
    let rows: Vec<usize> = (0..train_set.len().min(config.debug.gradcheck_batch.max(1))).collect();
    let batch = train_set.rows(&rows)?;
    let mut rng = rng_for(config.train.seed, 5);
    let mut out = Vec::new();
    for point in 0..config.debug.gradcheck_points {
        let mut m = model.clone();
        if point > 0 {
            for layer in m.layers_mut() {
                for x in layer.weights.data_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
            }
        }
        let mut analytic = backward(&m, &batch)?;
        if let Some(name) = &config.debug.corrupt_gradient {
            let g = analytic.get_mut(name).expect("layer checked above");
            for x in g.data_mut() {
                *x += 1e-2 * x.abs().max(1.0);
            }
        }
        let numeric = finite_diff_grad(&m, &batch, config.debug.gradcheck_step)?;
        for (name, a) in analytic.iter() {
            let n = numeric.get(name).expect("same layers");
            let err = relative_error(a.data(), n.data());
            out.push(GradcheckRow {
                point,
                layer: name.to_string(),
                rel_error: err,
                passed: err <= GRADCHECK_TOLERANCE,
            });
        }
    }
    Ok(GradcheckReport { rows: out })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows_checked: usize,
    /// One entry per violation, prefixed with its `trust_ratios.csv` line.
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// `Err(Error::Audit)` when anything was violated.
    pub fn into_result(self) -> Result<AuditReport> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::Audit(self.violations))
        }
    }
}

/// Re-checks a run directory's trust-ratio telemetry against its config:
/// step order, the recorded clip flag, the clip band, and `raw_gamma`
/// recomputed from the stored norms.
pub fn audit(dir: impl AsRef<Path>) -> Result<AuditReport> {
    let dir = dir.as_ref();
    let config = ExperimentConfig::load_json(dir.join(CONFIG_FILE))?;
    let path = dir.join(TRUST_RATIOS_FILE);
    if !path.exists() {
        return Err(Error::io(&path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let records = read_trust_ratios(&path)?;
    let opt = &config.optimizer;
    let mut violations = Vec::new();
    let mut prev_step = 0u64;
    for (i, (_, r)) in records.iter().enumerate() {
        let line = i + 2;
        let mut bad = |msg: String| violations.push(format!("line {line} (step {}, layer {}): {msg}", r.step, r.layer));
        if r.step < prev_step || r.step > prev_step + 1 || (i == 0 && r.step != 1) {
            bad(format!("step {} follows step {prev_step}", r.step));
        }
        prev_step = r.step;
        check_record(r, opt, &mut bad)?;
    }
    Ok(AuditReport {
        rows_checked: records.len(),
        violations,
    })
}

fn check_record(r: &TrustRatioRecord, opt: &crate::optim::OptimizerConfig, bad: &mut impl FnMut(String)) -> Result<()> {
    let expected_raw = if r.weight_norm > 0.0 && r.update_norm > 0.0 {
        r.weight_norm / r.update_norm
    } else {
        1.0
    };
    if !((r.raw_gamma - expected_raw).abs() <= AUDIT_TOLERANCE * expected_raw.max(1.0)) {
        bad(format!(
            "raw_gamma {} but weight_norm / update_norm = {expected_raw}",
            r.raw_gamma
        ));
    }
    if r.clipped != (r.clipped_gamma != r.raw_gamma) {
        bad(format!(
            "clipped flag {} inconsistent with raw {} and clipped {}",
            r.clipped, r.raw_gamma, r.clipped_gamma
        ));
    }
    if opt.force_unit_trust_ratio {
        if r.clipped_gamma != 1.0 {
            bad(format!(
                "forced unit trust ratio but clipped_gamma = {}",
                r.clipped_gamma
            ));
        }
    } else if let Some((lo, hi)) = opt.clip_bounds_at(r.step)? {
        if !(lo <= r.clipped_gamma && r.clipped_gamma <= hi) {
            bad(format!("clipped_gamma {} outside [{lo}, {hi}]", r.clipped_gamma));
        }
    }
    Ok(())
}

/// Writes a config file's JSON echo; used when a run directory must be
/// reconstructed by hand.
pub fn write_config(config: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, config.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
