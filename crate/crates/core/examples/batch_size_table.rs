//! Clip vs no clip across batch sizes, laid out with batch sizes as columns.
//!
//!     cargo run --release --example batch_size_table

use lambc::harness::{self, ExperimentConfig};

fn main() -> lambc::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = ExperimentConfig::from_file(
        concat!(env!("CARGO_MANIFEST_DIR"), "/configs/batch_table.toml"),
        &[format!("output.dir = \"{}\"", dir.path().display())],
    )?;
    let outcome = harness::sweep(&config)?;
    let report = &outcome.report;

    print!("{:<28}", "final test accuracy");
    for c in &report.columns {
        print!("{c:>10}");
    }
    println!();
    for row in report
        .rows
        .iter()
        .filter(|r| r.metric.starts_with("final_test_accuracy"))
    {
        print!("{:<28}", row.clipping);
        for v in &row.values {
            match v {
                Some(x) => print!("{:>10.4}", x),
                None => print!("{:>10}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
