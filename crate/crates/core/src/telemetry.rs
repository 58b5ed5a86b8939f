//! Run logs, file emission, and clip/no-clip comparison reports.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which
//! round-trips `f64` exactly, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;
use crate::optim::{parse_extended, TrustRatioRecord};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRUST_RATIOS_FILE: &str = "trust_ratios.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_NOTES_FILE: &str = "report.txt";

pub const METRICS_HEADER: &str = "run_id,step,epoch,train_loss,train_accuracy,test_loss,test_accuracy";
pub const TRUST_RATIOS_HEADER: &str = "run_id,step,layer,weight_norm,update_norm,raw_gamma,clipped_gamma,clipped";

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One optimizer step. Test metrics are filled in on the last step of each
/// epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: u64,
    pub epoch: usize,
    /// Batch loss measured before the update.
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Not written to disk; output files stay byte-reproducible.
    pub wall_clock: Duration,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub rows: Vec<StepRow>,
    pub trust: Vec<TrustRatioRecord>,
    layer_count: usize,
}

impl RunLog {
    pub fn new(run_id: impl Into<String>, config: ExperimentConfig, layer_count: usize) -> Self {
        RunLog {
            run_id: run_id.into(),
            config,
            rows: Vec::new(),
            trust: Vec::new(),
            layer_count,
        }
    }

    pub fn last_step(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.step)
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.test_accuracy)
    }

    pub fn best_test_accuracy(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.test_accuracy)
            .fold(None, |best, a| Some(best.map_or(a, |b: f64| b.max(a))))
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }

    /// First epoch whose end-of-epoch test accuracy reaches `threshold`.
    pub fn epochs_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.test_accuracy.is_some_and(|a| a >= threshold))
            .map(|r| r.epoch)
    }

    /// Reads a run back from the files [`write_outputs`] produced.
    pub fn load(dir: impl AsRef<Path>) -> Result<RunLog> {
        let dir = dir.as_ref();
        let config = ExperimentConfig::load_json(dir.join(CONFIG_FILE))?;
        let (run_id, rows) = read_metrics(dir.join(METRICS_FILE))?;
        let trust: Vec<TrustRatioRecord> = read_trust_ratios(dir.join(TRUST_RATIOS_FILE))?
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        let run_id = run_id.unwrap_or_else(|| config.output.run_id.clone());
        let steps = rows.len().max(1);
        let layer_count = trust.len() / steps;
        Ok(RunLog {
            run_id,
            config,
            rows,
            trust,
            layer_count,
        })
    }
}

/// Appends one step, checking order, record count and the clip band.
pub fn record_step(log: &mut RunLog, row: StepRow, records: Vec<TrustRatioRecord>) -> Result<()> {
    let expected = log.last_step() + 1;
    if row.step != expected {
        return Err(Error::Sequence {
            expected,
            got: row.step,
        });
    }
    let opt = &log.config.optimizer;
    if opt.algorithm.is_layerwise() {
        if records.len() != log.layer_count {
            return Err(Error::Invariant {
                layer: "*".into(),
                step: row.step,
                message: format!(
                    "expected {} trust-ratio records, got {}",
                    log.layer_count,
                    records.len()
                ),
            });
        }
    } else if !records.is_empty() {
        return Err(Error::Invariant {
            layer: "*".into(),
            step: row.step,
            message: format!("{} does not produce trust ratios", opt.algorithm),
        });
    }
    let band = opt.clip_bounds_at(row.step)?;
    for rec in &records {
        let fail = |message: String| Error::Invariant {
            layer: rec.layer.clone(),
            step: row.step,
            message,
        };
        if rec.step != row.step {
            return Err(fail(format!("record carries step {}", rec.step)));
        }
        if !(rec.raw_gamma >= 0.0) {
            return Err(fail(format!("raw trust ratio {} is negative", rec.raw_gamma)));
        }
        if rec.clipped != (rec.clipped_gamma != rec.raw_gamma) {
            return Err(fail("clipped flag disagrees with the recorded ratios".into()));
        }
        if let Some((lo, hi)) = band {
            if !opt.force_unit_trust_ratio && !(lo <= rec.clipped_gamma && rec.clipped_gamma <= hi) {
                return Err(fail(format!(
                    "clipped trust ratio {} outside band [{lo}, {hi}]",
                    rec.clipped_gamma
                )));
            }
        }
    }
    log.rows.push(row);
    log.trust.extend(records);
    Ok(())
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(log: &RunLog) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &log.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            log.run_id,
            r.step,
            r.epoch,
            fmt_f64(r.train_loss),
            fmt_opt(r.train_accuracy),
            fmt_opt(r.test_loss),
            fmt_opt(r.test_accuracy),
        );
    }
    out
}

pub fn trust_ratios_csv(log: &RunLog) -> String {
    let mut out = String::from(TRUST_RATIOS_HEADER);
    out.push('\n');
    for t in &log.trust {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            log.run_id,
            t.step,
            t.layer,
            fmt_f64(t.weight_norm),
            fmt_f64(t.update_norm),
            fmt_f64(t.raw_gamma),
            fmt_f64(t.clipped_gamma),
            t.clipped,
        );
    }
    out
}

/// Emits `metrics.csv`, `trust_ratios.csv` and `config.json` into `dir`.
pub fn write_outputs(log: &RunLog, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (METRICS_FILE, metrics_csv(log)),
        (TRUST_RATIOS_FILE, trust_ratios_csv(log)),
        (CONFIG_FILE, log.config.to_json()?),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        source_name: path.display().to_string(),
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(parse_err(path, 1, format!("unexpected header `{h}`"))),
        None => return Err(parse_err(path, 1, "missing header")),
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(str::to_string).collect();
            if fields.len() != width {
                return Err(parse_err(
                    path,
                    i + 2,
                    format!("expected {width} fields, found {}", fields.len()),
                ));
            }
            Ok((i + 2, fields))
        })
        .collect()
}

fn num(path: &Path, line: usize, field: &str) -> Result<f64> {
    parse_extended(field).ok_or_else(|| parse_err(path, line, format!("not a number: `{field}`")))
}

fn opt_num(path: &Path, line: usize, field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        num(path, line, field).map(Some)
    }
}

fn int<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("not an integer: `{field}`")))
}

/// Parses `trust_ratios.csv`, returning `(run_id, record)` pairs in file
/// order. Line numbers in errors are 1-based and count the header.
pub fn read_trust_ratios(path: impl AsRef<Path>) -> Result<Vec<(String, TrustRatioRecord)>> {
    let path = path.as_ref();
    csv_rows(path, TRUST_RATIOS_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let clipped = match f[7].as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(parse_err(
                        path,
                        line,
                        format!("clipped must be true/false, got `{other}`"),
                    ))
                }
            };
            Ok((
                f[0].clone(),
                TrustRatioRecord {
                    layer: f[2].clone(),
                    step: int(path, line, &f[1])?,
                    weight_norm: num(path, line, &f[3])?,
                    update_norm: num(path, line, &f[4])?,
                    raw_gamma: num(path, line, &f[5])?,
                    clipped_gamma: num(path, line, &f[6])?,
                    clipped,
                },
            ))
        })
        .collect()
}

/// Parses `metrics.csv`; returns the run id of the first row (if any) and
/// the step rows.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<(Option<String>, Vec<StepRow>)> {
    let path = path.as_ref();
    let rows = csv_rows(path, METRICS_HEADER)?;
    let run_id = rows.first().map(|(_, f)| f[0].clone());
    let rows = rows
        .into_iter()
        .map(|(line, f)| {
            Ok(StepRow {
                step: int(path, line, &f[1])?,
                epoch: int(path, line, &f[2])?,
                train_loss: num(path, line, &f[3])?,
                train_accuracy: opt_num(path, line, &f[4])?,
                test_loss: opt_num(path, line, &f[5])?,
                test_accuracy: opt_num(path, line, &f[6])?,
                wall_clock: Duration::ZERO,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((run_id, rows))
}

/// Which config fields distinguish the compared runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSpec {
    /// Swept field paths, in sweep order. Runs that agree on every axis other
    /// than `train.seed` and the column axis are averaged into one arm.
    pub axes: Vec<String>,
    /// Axis whose values become report columns (e.g. `data.batch_size`).
    pub column_axis: Option<String>,
    /// Arm label to subtract in delta rows; by default the single arm whose
    /// clipping is the identity.
    pub baseline: Option<String>,
    /// Test accuracy for the epochs-to-threshold metric.
    pub threshold: f64,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        ComparisonSpec {
            axes: Vec::new(),
            column_axis: None,
            baseline: None,
            threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub arm: String,
    /// `clip`, `no clip`, or `clip-minus-noclip` for delta rows.
    pub clipping: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub columns: Vec<String>,
    pub arms: Vec<String>,
    pub baseline: Option<String>,
    pub rows: Vec<ReportRow>,
    /// Run ids behind each (arm, column) cell.
    pub members: BTreeMap<(String, String), Vec<String>>,
    pub observations: Vec<String>,
}

impl ComparisonReport {
    pub fn row(&self, metric: &str, arm: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric && r.arm == arm)
    }

    pub fn value(&self, metric: &str, arm: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.row(metric, arm)?.values[c]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,arm,clipping");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.metric, r.arm, r.clipping);
            for v in &r.values {
                out.push(',');
                out.push_str(&fmt_opt(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

const SEED_AXIS: &str = "train.seed";

/// Builds a table with one column per value of the column axis and one row
/// per (metric, arm), followed by delta rows against the baseline arm.
pub fn compare_runs(runs: &[RunLog], spec: &ComparisonSpec) -> Result<ComparisonReport> {
    if runs.len() < 2 {
        return Err(Error::config("sweep", "a comparison needs at least two runs"));
    }
    let task = &runs[0].config.task;
    if let Some(other) = runs.iter().find(|r| &r.config.task != task) {
        return Err(Error::config(
            "task",
            format!("run `{}` uses a different task than `{}`", other.run_id, runs[0].run_id),
        ));
    }

    let arm_axes: Vec<&String> = spec
        .axes
        .iter()
        .filter(|a| a.as_str() != SEED_AXIS && Some(*a) != spec.column_axis.as_ref())
        .collect();
    let mut columns: Vec<String> = Vec::new();
    let mut arms: Vec<String> = Vec::new();
    let mut identity: BTreeMap<String, bool> = BTreeMap::new();
    let mut cells: BTreeMap<(String, String), Vec<&RunLog>> = BTreeMap::new();
    for run in runs {
        let column = match &spec.column_axis {
            Some(axis) => run.config.field_value(axis)?,
            None => "all".to_string(),
        };
        let arm = if spec.axes.is_empty() {
            run.run_id.clone()
        } else if arm_axes.is_empty() {
            "all".to_string()
        } else {
            arm_axes
                .iter()
                .map(|a| Ok(format!("{a}={}", run.config.field_value(a)?)))
                .collect::<Result<Vec<_>>>()?
                .join(" ")
        };
        if !columns.contains(&column) {
            columns.push(column.clone());
        }
        if !arms.contains(&arm) {
            arms.push(arm.clone());
        }
        let id = run.config.optimizer.clipping_is_identity();
        let entry = identity.entry(arm.clone()).or_insert(id);
        *entry &= id;
        cells.entry((arm, column)).or_default().push(run);
    }

    let baseline = match &spec.baseline {
        Some(b) if arms.contains(b) => Some(b.clone()),
        Some(b) => return Err(Error::config("sweep.baseline", format!("no arm named `{b}`"))),
        None => {
            let ids: Vec<&String> = arms.iter().filter(|a| identity[*a]).collect();
            (ids.len() == 1).then(|| ids[0].clone())
        }
    };

    type Metric = fn(&RunLog, f64) -> Option<f64>;
    let metrics: [(&str, Metric); 4] = [
        ("final_test_accuracy", |r, _| r.final_test_accuracy()),
        ("best_test_accuracy", |r, _| r.best_test_accuracy()),
        ("epochs_to_threshold", |r, th| {
            r.epochs_to_threshold(th).map(|e| e as f64)
        }),
        ("final_train_loss", |r, _| r.final_train_loss()),
    ];
    let cell_mean = |arm: &str, col: &str, f: Metric| -> Option<f64> {
        let runs = cells.get(&(arm.to_string(), col.to_string()))?;
        let vals: Vec<f64> = runs.iter().filter_map(|r| f(r, spec.threshold)).collect();
        mean(&vals)
    };

    let clipping_label = |arm: &str| if identity[arm] { "no clip" } else { "clip" };
    let mut rows = Vec::new();
    for (name, f) in metrics {
        for arm in &arms {
            rows.push(ReportRow {
                metric: name.to_string(),
                arm: arm.clone(),
                clipping: clipping_label(arm).to_string(),
                values: columns.iter().map(|c| cell_mean(arm, c, f)).collect(),
            });
        }
    }

    // Rank arms within each column by mean final test accuracy (1 = best).
    for arm in &arms {
        let values = columns
            .iter()
            .map(|c| {
                let mine = cell_mean(arm, c, metrics[0].1)?;
                let better = arms
                    .iter()
                    .filter_map(|a| cell_mean(a, c, metrics[0].1))
                    .filter(|v| *v > mine)
                    .count();
                Some((better + 1) as f64)
            })
            .collect();
        rows.push(ReportRow {
            metric: "rank_final_test_accuracy".into(),
            arm: arm.clone(),
            clipping: clipping_label(arm).to_string(),
            values,
        });
    }

    if let Some(base) = &baseline {
        for (name, f) in &metrics[..2] {
            for arm in arms.iter().filter(|a| *a != base) {
                rows.push(ReportRow {
                    metric: format!("{name}_delta"),
                    arm: format!("{arm} - {base}"),
                    clipping: "clip-minus-noclip".into(),
                    values: columns
                        .iter()
                        .map(|c| Some(cell_mean(arm, c, *f)? - cell_mean(base, c, *f)?))
                        .collect(),
                });
            }
        }
    }

    let members = cells
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|r| r.run_id.clone()).collect()))
        .collect();
    let mut report = ComparisonReport {
        columns,
        arms,
        baseline,
        rows,
        members,
        observations: Vec::new(),
    };
    report.observations = clip_ordering_observations(&report, runs, spec)?;
    Ok(report)
}

/// Notes whether tighter upper bounds ranked better, for sweeps over
/// `optimizer.clip_upper`. Recorded as an observation, never asserted.
fn clip_ordering_observations(
    report: &ComparisonReport,
    runs: &[RunLog],
    spec: &ComparisonSpec,
) -> Result<Vec<String>> {
    const AXIS: &str = "optimizer.clip_upper";
    if !spec.axes.iter().any(|a| a == AXIS) {
        return Ok(Vec::new());
    }
    let mut notes = Vec::new();
    for column in &report.columns {
        let mut by_bound: Vec<(f64, bool, f64)> = Vec::new();
        for arm in &report.arms {
            let Some(acc) = report.value("final_test_accuracy", arm, column) else {
                continue;
            };
            let ids = &report.members[&(arm.clone(), column.clone())];
            let run = runs.iter().find(|r| r.run_id == ids[0]).expect("member run");
            let cfg = &run.config.optimizer;
            by_bound.push((cfg.clip_upper, cfg.clipping_is_identity(), acc));
        }
        let mut clipped: Vec<&(f64, bool, f64)> = by_bound.iter().filter(|b| !b.1).collect();
        if clipped.is_empty() {
            continue;
        }
        clipped.sort_by(|a, b| b.2.total_cmp(&a.2));
        let order: Vec<String> = clipped.iter().map(|b| fmt_bound(b.0)).collect();
        let tightest = clipped.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
        let loosest = clipped.iter().map(|b| b.0).fold(0.0, f64::max);
        let mut line = format!(
            "[{column}] clipped arms by mean final test accuracy, best first: {}; tightest bound best: {}; loosest bound worst: {}",
            order.join(" > "),
            yes_no(clipped[0].0 == tightest),
            yes_no(clipped[clipped.len() - 1].0 == loosest),
        );
        if let Some(noclip) = by_bound.iter().find(|b| b.1) {
            let beaten = clipped.iter().filter(|b| b.2 > noclip.2).count();
            let _ = write!(line, "; clipped arms above no-clip: {beaten}/{}", clipped.len());
        }
        notes.push(line);
    }
    Ok(notes)
}

fn fmt_bound(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "inf".into()
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Writes `report.csv` and the human-readable `report.txt`.
pub fn write_report(report: &ComparisonReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(REPORT_FILE);
    write_atomic(&csv, report.to_csv().as_bytes())?;
    let mut notes = String::new();
    let _ = writeln!(notes, "columns: {}", report.columns.join(", "));
    let _ = writeln!(
        notes,
        "baseline arm: {}",
        report.baseline.as_deref().unwrap_or("(none)")
    );
    for ((arm, col), ids) in &report.members {
        let _ = writeln!(notes, "cell [{arm}] x [{col}]: {} run(s)", ids.len());
    }
    for o in &report.observations {
        let _ = writeln!(notes, "observation: {o}");
    }
    let txt = dir.join(REPORT_NOTES_FILE);
    write_atomic(&txt, notes.as_bytes())?;
    Ok(vec![csv, txt])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{Algorithm, OptimizerConfig};

    fn lambc_log(upper: f64) -> RunLog {
        let cfg = ExperimentConfig {
            optimizer: OptimizerConfig::lambc(upper),
            ..ExperimentConfig::default()
        };
        RunLog::new("r", cfg, 2)
    }

    fn row(step: u64) -> StepRow {
        StepRow {
            step,
            epoch: step as usize,
            train_loss: 0.5,
            train_accuracy: Some(0.75),
            test_loss: None,
            test_accuracy: None,
            wall_clock: Duration::ZERO,
        }
    }

    fn rec(layer: &str, step: u64, raw: f64, clipped: f64) -> TrustRatioRecord {
        TrustRatioRecord {
            layer: layer.into(),
            step,
            weight_norm: raw,
            update_norm: 1.0,
            raw_gamma: raw,
            clipped_gamma: clipped,
            clipped: raw != clipped,
        }
    }

    #[test]
    fn first_step_is_one() {
        let mut log = lambc_log(1.0);
        let err = record_step(&mut log, row(2), vec![rec("a", 2, 0.5, 0.5), rec("b", 2, 0.5, 0.5)]);
        assert!(matches!(err, Err(Error::Sequence { expected: 1, got: 2 })));
        record_step(&mut log, row(1), vec![rec("a", 1, 0.5, 0.5), rec("b", 1, 2.0, 1.0)]).unwrap();
        assert_eq!(log.trust.len(), 2);
    }

    #[test]
    fn band_violation_is_invariant_error() {
        let mut log = lambc_log(1.0);
        let err = record_step(&mut log, row(1), vec![rec("a", 1, 0.5, 0.5), rec("b", 1, 2.0, 1.2)]).unwrap_err();
        assert!(matches!(err, Error::Invariant { ref layer, step: 1, .. } if layer == "b"));
    }

    #[test]
    fn record_count_must_match_layers() {
        let mut log = lambc_log(1.0);
        assert!(matches!(
            record_step(&mut log, row(1), vec![rec("a", 1, 0.5, 0.5)]),
            Err(Error::Invariant { .. })
        ));
    }

    #[test]
    fn empty_run_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let log = lambc_log(1.0);
        write_outputs(&log, dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap(),
            format!("{METRICS_HEADER}\n")
        );
        assert_eq!(
            fs::read_to_string(dir.path().join(TRUST_RATIOS_FILE)).unwrap(),
            format!("{TRUST_RATIOS_HEADER}\n")
        );
        let back = ExperimentConfig::load_json(dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(back, log.config);
    }

    #[test]
    fn trust_ratio_file_round_trips() {
        let mut log = lambc_log(1.0);
        let odd = [1.0 / 3.0, std::f64::consts::PI * 1e-200, 123456.789e150];
        for (i, raw) in odd.iter().enumerate() {
            let step = i as u64 + 1;
            record_step(
                &mut log,
                row(step),
                vec![rec("a", step, *raw, raw.min(1.0)), rec("b", step, 0.0, 0.0)],
            )
            .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&log, dir.path()).unwrap();
        let back: Vec<TrustRatioRecord> = read_trust_ratios(dir.path().join(TRUST_RATIOS_FILE))
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        assert_eq!(back, log.trust);
        let loaded = RunLog::load(dir.path()).unwrap();
        assert_eq!(loaded.rows, log.rows);
    }

    fn finished(id: &str, cfg: ExperimentConfig, accs: &[f64]) -> RunLog {
        let mut log = RunLog::new(id, cfg, 0);
        for (i, a) in accs.iter().enumerate() {
            log.rows.push(StepRow {
                step: i as u64 + 1,
                epoch: i + 1,
                train_loss: 1.0 - a,
                train_accuracy: None,
                test_loss: None,
                test_accuracy: Some(*a),
                wall_clock: Duration::ZERO,
            });
        }
        log
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let cfg = ExperimentConfig::default();
        let a = finished("a", cfg.clone(), &[0.5, 0.8, 0.7]);
        let b = finished("b", cfg, &[0.5, 0.8, 0.7]);
        let spec = ComparisonSpec {
            baseline: Some("b".into()),
            ..ComparisonSpec::default()
        };
        let report = compare_runs(&[a, b], &spec).unwrap();
        let deltas: Vec<_> = report.rows.iter().filter(|r| r.metric.ends_with("_delta")).collect();
        assert_eq!(deltas.len(), 2);
        assert!(deltas.iter().all(|r| r.values == vec![Some(0.0)]));
    }

    #[test]
    fn table_shaped_report() {
        let mut runs = Vec::new();
        for (i, bs) in ["full", "n/2", "n/4"].iter().enumerate() {
            for algo in [Algorithm::Lamb, Algorithm::Lambc] {
                let mut cfg = ExperimentConfig::default();
                cfg.data.batch_size = bs.parse().unwrap();
                cfg.optimizer = OptimizerConfig::new(algo);
                let acc = if algo == Algorithm::Lambc { 0.9 } else { 0.8 } - 0.01 * i as f64;
                runs.push(finished(&format!("{algo}-{bs}"), cfg, &[0.5, acc]));
            }
        }
        let spec = ComparisonSpec {
            axes: vec!["data.batch_size".into(), "optimizer.algorithm".into()],
            column_axis: Some("data.batch_size".into()),
            ..ComparisonSpec::default()
        };
        let report = compare_runs(&runs, &spec).unwrap();
        assert_eq!(report.columns, vec!["full", "n/2", "n/4"]);
        assert_eq!(
            report.arms,
            vec!["optimizer.algorithm=lamb", "optimizer.algorithm=lambc"]
        );
        assert_eq!(report.baseline.as_deref(), Some("optimizer.algorithm=lamb"));
        let delta = report
            .row(
                "final_test_accuracy_delta",
                "optimizer.algorithm=lambc - optimizer.algorithm=lamb",
            )
            .unwrap();
        for (c, v) in report.columns.iter().zip(&delta.values) {
            let recomputed = report
                .value("final_test_accuracy", "optimizer.algorithm=lambc", c)
                .unwrap()
                - report
                    .value("final_test_accuracy", "optimizer.algorithm=lamb", c)
                    .unwrap();
            assert_eq!(v.unwrap(), recomputed);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("metric,arm,clipping,full,n/2,n/4\n"));
    }

    #[test]
    fn mismatched_tasks_rejected() {
        let a = finished("a", ExperimentConfig::default(), &[0.5]);
        let cfg = ExperimentConfig {
            task: crate::tasks::TaskSpec::Logistic { inputs: 3, margin: 0.0 },
            ..ExperimentConfig::default()
        };
        let b = finished("b", cfg, &[0.5]);
        assert!(matches!(
            compare_runs(&[a, b], &ComparisonSpec::default()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn float_format_is_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        for x in [0.1, 1.0 / 3.0, 5e-324, f64::MAX, -2.5e-17] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
