//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lambc::data::{load_csv, load_idx, read_idx, write_csv, write_idx, IdxArray};
use lambc::harness::{self, ExperimentConfig};
use lambc::optim::{adam_moment_update, adam_ratio, bias_correct, lamb_step};
use lambc::telemetry::{read_trust_ratios, REPORT_FILE, REPORT_NOTES_FILE};
use lambc::{
    backward, clip_trust_ratio, forward, make_task, trust_ratio, BiasCorrection, Dataset, Error, Gradients,
    LayerParams, Model, OptimizerConfig, Split, Tensor,
};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cfg(overrides: &[&str], out: &Path) -> Result<ExperimentConfig, String> {
    let mut all: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    all.push(format!("output.dir=\"{}\"", out.display()));
    ExperimentConfig::parse("", &all).map_err(|e| e.to_string())
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn tmp() -> Result<TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// lambc with the band [0, inf) writes the same telemetry bytes as lamb.
fn identity_bound_equivalence() -> Outcome {
    let dir = tmp()?;
    for seed in 0..3u64 {
        let mut files = Vec::new();
        for (name, algo) in [
            ("lamb", "optimizer.algorithm=lamb"),
            ("lambc", "optimizer.algorithm=lambc"),
        ] {
            let seed_kv = format!("train.seed={seed}");
            let mut ov = vec![algo, "train.epochs=200", seed_kv.as_str()];
            if name == "lambc" {
                ov.extend(["optimizer.clip_lower=0", "optimizer.clip_upper=inf"]);
            }
            let out = dir.path().join(format!("{name}-{seed}"));
            let c = cfg(&ov, &out)?;
            let log = harness::run(&c).map_err(s)?;
            check(log.last_step() == 200, || {
                format!("expected 200 steps, got {}", log.last_step())
            })?;
            files.push((read(&out.join("metrics.csv"))?, read(&out.join("trust_ratios.csv"))?));
        }
        check(files[0].0 == files[1].0, || {
            format!("metrics.csv differs for seed {seed}")
        })?;
        check(files[0].1 == files[1].1, || {
            format!("trust_ratios.csv differs for seed {seed}")
        })?;
    }
    Ok("3 seeds x 200 steps, metrics.csv and trust_ratios.csv byte-identical".into())
}

/// Every record of every lambc run lies in [0, tau]; tau = 1 clips at least once.
fn clip_band_audit() -> Outcome {
    let dir = tmp()?;
    let mut summary = Vec::new();
    for tau in ["1", "3", "5", "10"] {
        let out = dir.path().join(format!("tau{tau}"));
        let upper = format!("optimizer.clip_upper={tau}");
        let c = cfg(&["optimizer.algorithm=lambc", &upper, "data.batch_size=\"n/4\""], &out)?;
        harness::run(&c).map_err(s)?;
        let limit: f64 = tau.parse().unwrap();
        let rows = read_trust_ratios(out.join("trust_ratios.csv")).map_err(s)?;
        check(!rows.is_empty(), || "no telemetry rows".into())?;
        let outside = rows
            .iter()
            .filter(|(_, r)| !(0.0 <= r.clipped_gamma && r.clipped_gamma <= limit))
            .count();
        check(outside == 0, || format!("tau={tau}: {outside} rows outside [0, {tau}]"))?;
        let fired = rows.iter().filter(|(_, r)| r.clipped).count();
        if tau == "1" {
            check(fired > 0, || "tau=1: clipping never fired".into())?;
        }
        let report = harness::audit(&out).map_err(s)?;
        check(report.passed(), || {
            format!("tau={tau}: audit failed: {:?}", report.violations)
        })?;
        summary.push(format!("tau={tau}: {} rows, {fired} clipped", rows.len()));
    }
    Ok(summary.join("; "))
}

/// Analytic gradients agree with central differences on every task.
fn gradient_correctness() -> Outcome {
    let dir = tmp()?;
    let mut summary = Vec::new();
    let cases: [(&str, &[&str]); 5] = [
        ("quadratic", &["task.kind=quadratic"]),
        ("linear", &["task.kind=linear"]),
        ("logistic", &["task.kind=logistic"]),
        ("mlp", &["task.kind=mlp"]),
        ("mlp(2-16-2)", &["task.kind=mlp", "task.widths=[2,16,2]"]),
    ];
    for (name, ov) in cases {
        let mut ov = ov.to_vec();
        ov.extend(["debug.gradcheck_points=10", "debug.gradcheck_step=1e-5"]);
        let c = cfg(&ov, dir.path())?;
        let report = harness::gradcheck(&c).map_err(s)?;
        let worst = report.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
        check(report.rows.len() >= 10, || {
            format!("{name}: only {} rows", report.rows.len())
        })?;
        check(report.passed() && worst <= 1e-6, || {
            format!("{name}: worst relative error {worst:e}")
        })?;
        if name == "quadratic" {
            check(worst <= 1e-8, || {
                format!("quadratic: worst relative error {worst:e} > 1e-8")
            })?;
        }
        summary.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("worst relative error: {}", summary.join(", ")))
}

/// Quadratic convergence for lamb and lambc(1); logistic separates its data.
fn convergence_sanity() -> Outcome {
    let dir = tmp()?;
    let mut summary = Vec::new();
    for algo in ["lamb", "lambc"] {
        let a = format!("optimizer.algorithm={algo}");
        let c = cfg(
            &[
                "task.kind=quadratic",
                "task.dim=10",
                "task.condition=100",
                &a,
                "optimizer.clip_upper=1",
                "optimizer.lr=1e-2",
                "train.epochs=5000",
                "train.seed=0",
            ],
            dir.path(),
        )?;
        let (log, _) = harness::train(&c).map_err(s)?;
        let loss = log.final_train_loss().unwrap_or(f64::NAN);
        check(log.last_step() == 5000, || format!("{algo}: {} steps", log.last_step()))?;
        check(loss <= 1e-8, || format!("{algo}: quadratic loss {loss:e} > 1e-8"))?;
        summary.push(format!("quadratic {algo} loss {loss:.1e}"));
    }
    for algo in ["lamb", "lambc"] {
        let a = format!("optimizer.algorithm={algo}");
        let c = cfg(
            &[
                "task.kind=logistic",
                "task.margin=0.2",
                &a,
                "data.batch_size=128",
                "train.epochs=80",
                "train.seed=0",
            ],
            dir.path(),
        )?;
        let (_, model) = harness::train(&c).map_err(s)?;
        let (_, train_set, _) = harness::prepare(&c).map_err(s)?;
        let acc = forward(&model, &train_set.as_batch())
            .map_err(s)?
            .accuracy
            .unwrap_or(0.0);
        check(acc == 1.0, || format!("logistic {algo}: train accuracy {acc}"))?;
        summary.push(format!("logistic {algo} train acc {acc}"));
    }
    Ok(summary.join("; "))
}

fn t1(v: &[f64]) -> Tensor {
    Tensor::from_vec(v.to_vec()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Operation-level examples for the pieces of one LAMB step.
fn algorithm_micro_tests() -> Outcome {
    // adam_moment_update
    let mut layer = LayerParams::new("w", t1(&[0.0])).map_err(s)?;
    adam_moment_update(&mut layer, &t1(&[1.0]), 0.9, 0.999).map_err(s)?;
    check(close(layer.m.data()[0], 0.1), || format!("m1 = {}", layer.m.data()[0]))?;
    let mut layer = LayerParams::new("w", t1(&[0.0])).map_err(s)?;
    adam_moment_update(&mut layer, &t1(&[-2.0]), 0.9, 0.999).map_err(s)?;
    check(close(layer.v.data()[0], 0.004), || {
        format!("v1 = {}", layer.v.data()[0])
    })?;

    // EWMA closed form over 50 steps.
    let mut layer = LayerParams::new("w", t1(&[0.0])).map_err(s)?;
    let gs: Vec<f64> = (0..50).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
    for g in &gs {
        adam_moment_update(&mut layer, &t1(&[*g]), 0.9, 0.999).map_err(s)?;
    }
    let oracle: f64 = gs
        .iter()
        .enumerate()
        .map(|(k, g)| 0.1 * 0.9f64.powi(49 - k as i32) * g)
        .sum();
    check(close(layer.m.data()[0], oracle), || "m differs from EWMA sum".into())?;

    // bias_correct
    let m = t1(&[0.3]);
    let v = t1(&[0.02]);
    let (a, _) = bias_correct(&m, &v, 0.9, 0.999, 1, BiasCorrection::PaperConstant).map_err(s)?;
    let (b, _) = bias_correct(&m, &v, 0.9, 0.999, 1, BiasCorrection::PowerT).map_err(s)?;
    check(close(a.data()[0], b.data()[0]) && close(a.data()[0], 3.0), || {
        "t=1 modes disagree".into()
    })?;
    let m = t1(&[0.19]);
    let (pc, _) = bias_correct(&m, &v, 0.9, 0.999, 2, BiasCorrection::PaperConstant).map_err(s)?;
    let (pt, _) = bias_correct(&m, &v, 0.9, 0.999, 2, BiasCorrection::PowerT).map_err(s)?;
    check(close(pc.data()[0], 1.9), || {
        format!("paper-constant m_hat = {}", pc.data()[0])
    })?;
    check(close(pt.data()[0], 1.0), || format!("power-t m_hat = {}", pt.data()[0]))?;

    // adam_ratio
    let r = adam_ratio(&t1(&[0.0, 1.0]), &t1(&[4.0, 1.0]), 0.0).map_err(s)?;
    check(r.data() == [0.0, 1.0], || format!("ratio = {:?}", r.data()))?;
    let g = [3.0, -0.5, 2e-3];
    let mut layer = LayerParams::new("w", t1(&[0.0; 3])).map_err(s)?;
    adam_moment_update(&mut layer, &t1(&g), 0.9, 0.999).map_err(s)?;
    let (mh, vh) = bias_correct(&layer.m, &layer.v, 0.9, 0.999, 1, BiasCorrection::PaperConstant).map_err(s)?;
    let r = adam_ratio(&mh, &vh, 0.0).map_err(s)?;
    for (ri, gi) in r.data().iter().zip(g) {
        check(close(*ri, gi.signum()), || format!("first-step ratio {ri} for g={gi}"))?;
    }

    // trust_ratio
    let cfg = OptimizerConfig::lamb();
    let layer = LayerParams::new("w", t1(&[0.0, 2.0])).map_err(s)?;
    let tr = trust_ratio(&layer, &t1(&[1.0, 0.0]), &cfg).map_err(s)?;
    check(close(tr.gamma, 2.0), || format!("gamma = {}", tr.gamma))?;
    let bias = LayerParams::new("b", t1(&[0.0, 0.0])).map_err(s)?;
    let tr = trust_ratio(&bias, &t1(&[0.3, -0.1]), &cfg).map_err(s)?;
    check(tr.gamma == 1.0, || format!("zero-norm gamma = {}", tr.gamma))?;
    let w = [0.3, -1.7, 2.2, 0.05];
    let u = [1.1, 0.4, -0.9, 0.0];
    let layer = LayerParams::new("w", t1(&w)).map_err(s)?;
    let tr = trust_ratio(&layer, &t1(&u), &cfg).map_err(s)?;
    let brute = w.iter().map(|x| x * x).sum::<f64>().sqrt() / u.iter().map(|x| x * x).sum::<f64>().sqrt();
    check((tr.gamma - brute).abs() <= 1e-12 * brute, || {
        format!("gamma {} vs {brute}", tr.gamma)
    })?;

    // clip_trust_ratio
    check(clip_trust_ratio(2.5, 0.0, 1.0).map_err(s)? == 1.0, || {
        "clip(2.5) != 1".into()
    })?;
    check(clip_trust_ratio(0.5, 0.0, 1.0).map_err(s)? == 0.5, || {
        "clip(0.5) != 0.5".into()
    })?;
    for g in [0.0, 1e-9, 0.7, 3.0, 1e12] {
        check(clip_trust_ratio(g, 0.0, f64::INFINITY).map_err(s)? == g, || {
            format!("clip({g}) changed")
        })?;
    }
    check(
        matches!(clip_trust_ratio(1.0, 2.0, 1.0), Err(Error::Config { .. })),
        || "mu > tau accepted".into(),
    )?;
    Ok("moment update, bias correction, ratio, trust ratio and clip examples reproduced".into())
}

/// First-step LAMB update is unchanged by rescaling one layer's gradient.
fn scale_invariance() -> Outcome {
    let task = make_task(&ExperimentConfig::default().task, 0).map_err(s)?;
    let (train, _) = task.datasets(None, 256, 64).map_err(s)?;
    let grads = backward(&task.model, &train.as_batch()).map_err(s)?;
    let mut cfg = OptimizerConfig::lamb();
    cfg.eps = 0.0;
    cfg.weight_decay = 0.0;
    let step = |g: &Gradients| -> Result<Model, String> {
        let mut m = task.model.clone();
        lamb_step(&mut m, g, &cfg, 1).map_err(s)?;
        Ok(m)
    };
    let base = step(&grads)?;
    let mut worst = 0.0f64;
    for layer in task.model.layer_names() {
        for c in [1e-6, 1.0, 1e6] {
            let mut g = grads.clone();
            let t = g.get_mut(&layer).unwrap();
            *t = t.map(|x| x * c).map_err(s)?;
            let moved = step(&g)?;
            for (a, b) in moved.layers().iter().zip(base.layers()) {
                for (x, y) in a.weights.data().iter().zip(b.weights.data()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    check(worst <= 1e-12, || format!("max element difference {worst:e}"))?;
    Ok(format!(
        "max element difference {worst:e} over all layers and c in {{1e-6, 1, 1e6}}"
    ))
}

/// clip_upper in {1, 3, 5, 10, inf} x 5 seeds yields a Table-1-shaped report.
fn protocol_shape() -> Outcome {
    let dir = tmp()?;
    let text = "optimizer.algorithm = \"lambc\"\ndata.batch_size = \"n/4\"\n\n[sweep]\nclip_upper = [1, 3, 5, 10, inf]\nseed = [0, 1, 2, 3, 4]\n";
    let config = ExperimentConfig::parse(text, &[format!("output.dir=\"{}\"", dir.path().display())]).map_err(s)?;
    let outcome = harness::sweep(&config).map_err(s)?;
    check(outcome.runs.len() == 25, || format!("{} runs", outcome.runs.len()))?;
    let csv = fs::read_to_string(dir.path().join(REPORT_FILE)).map_err(s)?;
    let header = csv.lines().next().unwrap_or_default();
    check(header.starts_with("metric,arm,clipping,"), || {
        format!("report header `{header}`")
    })?;
    let report = &outcome.report;
    check(report.arms.len() == 5, || format!("arms {:?}", report.arms))?;
    let baseline = report.baseline.clone().ok_or("no no-clip baseline arm")?;
    check(baseline.contains("inf"), || format!("baseline arm `{baseline}`"))?;
    let mut cells = Vec::new();
    for arm in &report.arms {
        let row = report
            .row("final_test_accuracy", arm)
            .ok_or_else(|| format!("no final_test_accuracy row for {arm}"))?;
        let mean = row.values.first().copied().flatten().ok_or("missing mean accuracy")?;
        check(csv.contains(&format!("final_test_accuracy,{arm},")), || {
            format!("{arm} missing from csv")
        })?;
        if arm != &baseline {
            let label = format!("{arm} - {baseline}");
            let delta = report
                .row("final_test_accuracy_delta", &label)
                .ok_or_else(|| format!("no delta row `{label}`"))?;
            check(delta.clipping == "clip-minus-noclip", || "delta row mislabelled".into())?;
        }
        cells.push(format!("{arm}={mean:.4}"));
    }
    let notes = fs::read_to_string(dir.path().join(REPORT_NOTES_FILE)).map_err(s)?;
    check(!report.observations.is_empty() && notes.contains("clip_upper"), || {
        "no ordering observation recorded".into()
    })?;
    Ok(format!("25 runs; mean final test accuracy {}", cells.join(", ")))
}

/// The same config run twice writes the same bytes.
fn determinism() -> Outcome {
    let dir = tmp()?;
    let out = dir.path().join("run");
    let c = cfg(&["data.batch_size=\"n/4\"", "train.seed=11"], &out)?;
    let files = ["metrics.csv", "trust_ratios.csv", "config.json"];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        harness::run(&c).map_err(s)?;
        snapshots.push(
            files
                .iter()
                .map(|f| read(&out.join(f)))
                .collect::<Result<Vec<_>, _>>()?,
        );
        fs::remove_dir_all(&out).map_err(s)?;
    }
    for (i, f) in files.iter().enumerate() {
        check(snapshots[0][i] == snapshots[1][i], || format!("{f} differs"))?;
    }
    Ok("metrics.csv, trust_ratios.csv, config.json byte-identical".into())
}

/// CSV and IDX round-trips; audit passes a fresh run and rejects a tampered one.
fn format_round_trips() -> Outcome {
    let dir = tmp()?;
    let features = Tensor::new(vec![3, 2], vec![0.1, -2.5, 1e-17, 3.0, 1.0 / 3.0, 7.0]).map_err(s)?;
    let labels = Tensor::from_vec(vec![0.0, 1.0, 1.0]).map_err(s)?;
    let ds = Dataset::new(features, labels, Split::Train, "fixture").map_err(s)?;
    let csv = dir.path().join("d.csv");
    write_csv(&ds, &csv).map_err(s)?;
    let back = load_csv(&csv, false).map_err(s)?;
    check(back.features == ds.features && back.labels == ds.labels, || {
        "CSV round-trip changed values".into()
    })?;

    let images = IdxArray {
        dims: vec![2, 2, 3],
        data: vec![0, 255, 17, 3, 128, 64, 1, 2, 3, 4, 5, 250],
    };
    let lbls = IdxArray {
        dims: vec![2],
        data: vec![7, 1],
    };
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lbl.idx"));
    write_idx(&ip, &images).map_err(s)?;
    write_idx(&lp, &lbls).map_err(s)?;
    check(read_idx(&ip).map_err(s)? == images, || "IDX image round-trip".into())?;
    check(read_idx(&lp).map_err(s)? == lbls, || "IDX label round-trip".into())?;
    let loaded = load_idx(&ip, &lp).map_err(s)?;
    check(loaded.features.shape() == [2, 6], || {
        format!("IDX shape {:?}", loaded.features.shape())
    })?;
    let scaled: Vec<f64> = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    check(loaded.features.data() == scaled.as_slice(), || "IDX scaling".into())?;
    check(loaded.labels.data() == [7.0, 1.0], || "IDX labels".into())?;

    let out = dir.path().join("run");
    let c = cfg(
        &["optimizer.algorithm=lambc", "optimizer.clip_upper=1", "train.epochs=20"],
        &out,
    )?;
    harness::run(&c).map_err(s)?;
    let fresh = harness::audit(&out).map_err(s)?;
    check(fresh.passed(), || {
        format!("fresh run failed audit: {:?}", fresh.violations)
    })?;

    let path = out.join("trust_ratios.csv");
    let text = fs::read_to_string(&path).map_err(s)?;
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let target = 5;
    let mut fields: Vec<String> = lines[target - 1].split(',').map(str::to_string).collect();
    fields[6] = "5".into();
    fields[7] = "true".into();
    lines[target - 1] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").map_err(s)?;
    let tampered = harness::audit(&out).map_err(s)?;
    check(!tampered.passed(), || "tampered run passed audit".into())?;
    check(
        tampered
            .violations
            .iter()
            .any(|v| v.starts_with(&format!("line {target} "))),
        || format!("violation not reported at line {target}: {:?}", tampered.violations),
    )?;
    check(
        matches!(tampered.into_result(), Err(ref e) if e.exit_code() == 4),
        || "tampered audit does not map to exit code 4".into(),
    )?;
    Ok(format!(
        "CSV, IDX round-trips; audit clean on fresh run, flags line {target} of tampered run"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "identity-bound equivalence",
            Duration::from_secs(10),
            identity_bound_equivalence,
        ),
        ("clip-band audit", Duration::from_secs(30), clip_band_audit),
        ("gradient correctness", Duration::from_secs(30), gradient_correctness),
        ("convergence sanity", Duration::from_secs(60), convergence_sanity),
        ("algorithm micro-tests", Duration::from_secs(1), algorithm_micro_tests),
        ("scale invariance", Duration::from_secs(1), scale_invariance),
        ("protocol-shape sweep", Duration::from_secs(300), protocol_shape),
        ("determinism", Duration::from_secs(10), determinism),
        ("format round-trips", Duration::from_secs(5), format_round_trips),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > *budget => Err(format!("{detail}; took {took:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}) [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
