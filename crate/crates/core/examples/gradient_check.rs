//! Analytic vs central-difference gradients for every built-in task, plus a
//! deliberately corrupted layer to show what a failure looks like.
//!
//!     cargo run --release --example gradient_check

use lambc::harness::{self, ExperimentConfig, GRADCHECK_TOLERANCE};

fn main() -> lambc::Result<()> {
    let cases = [
        ("quadratic", vec!["task.kind=quadratic"]),
        ("linear", vec!["task.kind=linear"]),
        ("logistic", vec!["task.kind=logistic"]),
        ("mlp", vec!["task.kind=mlp"]),
        (
            "mlp, fc1.weight corrupted",
            vec!["task.kind=mlp", "debug.corrupt_gradient=fc1.weight"],
        ),
    ];
    for (name, overrides) in cases {
        let overrides: Vec<String> = overrides.into_iter().map(String::from).collect();
        let report = harness::gradcheck(&ExperimentConfig::parse("", &overrides)?)?;
        println!("{name}:");
        for layer in report.rows.iter().filter(|r| r.point == 0).map(|r| r.layer.as_str()) {
            let worst = report
                .rows
                .iter()
                .filter(|r| r.layer == layer)
                .map(|r| r.rel_error)
                .fold(0.0, f64::max);
            let verdict = if worst <= GRADCHECK_TOLERANCE { "pass" } else { "FAIL" };
            println!("  {layer:<12} {worst:>10.2e}  {verdict}");
        }
    }
    Ok(())
}
