//! Write a run, audit it, tamper with one telemetry row, and audit again.
//!
//!     cargo run --release --example audit_run

use std::fs;

use lambc::harness::{self, ExperimentConfig};

fn main() -> lambc::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = ExperimentConfig::parse(
        "train.epochs = 10",
        &[format!("output.dir = \"{}\"", dir.path().display())],
    )?;
    harness::run(&config)?;
    let clean = harness::audit(dir.path())?;
    println!(
        "fresh run: {} rows, {} violations",
        clean.rows_checked,
        clean.violations.len()
    );

    let path = dir.path().join("trust_ratios.csv");
    let text = fs::read_to_string(&path).expect("telemetry");
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[7].split(',').map(String::from).collect();
    fields[6] = "5".into();
    fields[7] = "true".into();
    lines[7] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").expect("rewrite");

    let tampered = harness::audit(dir.path())?;
    println!("tampered run: {} violations", tampered.violations.len());
    for v in &tampered.violations {
        println!("  {v}");
    }
    if let Err(e) = tampered.into_result() {
        println!("exit code would be {}", e.exit_code());
    }
    Ok(())
}
