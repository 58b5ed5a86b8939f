//! Every algorithm on the ill-conditioned quadratic and the desk MLP.
//!
//!     cargo run --release --example optimizer_zoo

use lambc::harness::{self, ExperimentConfig};
use lambc::Algorithm;

fn main() -> lambc::Result<()> {
    let algorithms = [
        Algorithm::Sgd,
        Algorithm::SgdMomentum,
        Algorithm::Adam,
        Algorithm::Lars,
        Algorithm::Lamb,
        Algorithm::Lambc,
    ];
    println!("{:<14} {:>16} {:>16}", "algorithm", "quadratic loss", "mlp test acc");
    for algo in algorithms {
        let quad = ExperimentConfig::parse(
            "task.kind = \"quadratic\"\ntrain.epochs = 2000\noptimizer.lr = 5e-3",
            &[format!("optimizer.algorithm={algo}")],
        )?;
        let mlp = ExperimentConfig::parse(
            "data.batch_size = \"n/4\"\ntrain.epochs = 40",
            &[format!("optimizer.algorithm={algo}")],
        )?;
        let (q, _) = harness::train(&quad)?;
        let (m, _) = harness::train(&mlp)?;
        println!(
            "{:<14} {:>16.3e} {:>16.4}",
            algo.to_string(),
            q.final_train_loss().unwrap_or(f64::NAN),
            m.final_test_accuracy().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
