//! Train the default desk task with LAMBC and print the per-epoch curve.
//!
//!     cargo run --release --example quickstart

use lambc::harness::{self, ExperimentConfig};

fn main() -> lambc::Result<()> {
    let config = ExperimentConfig::default();
    let (log, model) = harness::train(&config)?;

    println!(
        "task {} with {} parameters",
        config.task.kind(),
        model.parameter_count()
    );
    for row in log.rows.iter().filter(|r| r.epoch % 10 == 0 || r.epoch == 1) {
        println!(
            "epoch {:>3}  train loss {:.4}  test accuracy {:.4}",
            row.epoch,
            row.train_loss,
            row.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    let clipped = log.trust.iter().filter(|r| r.clipped).count();
    println!("{clipped} of {} trust ratios were clipped", log.trust.len());
    Ok(())
}
