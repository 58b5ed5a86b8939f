//! Compare per-layer trust ratios of LAMB and LAMBC on the same task and
//! report when clipping first fires.
//!
//!     cargo run --release --example trust_ratio_telemetry

use std::collections::BTreeMap;

use lambc::harness::{self, ExperimentConfig};

fn main() -> lambc::Result<()> {
    for algorithm in ["lamb", "lambc"] {
        let config = ExperimentConfig::parse(
            &format!("optimizer.algorithm = \"{algorithm}\"\ndata.batch_size = \"n/4\""),
            &[],
        )?;
        let (log, _) = harness::train(&config)?;
        println!("{algorithm}: {} steps", log.last_step());

        let mut per_layer: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
        for r in &log.trust {
            let e = per_layer.entry(&r.layer).or_insert((0.0, 0.0, 0));
            e.0 = e.0.max(r.raw_gamma);
            e.1 = e.1.max(r.clipped_gamma);
            e.2 += r.clipped as usize;
        }
        println!(
            "  {:<12} {:>10} {:>12} {:>8}",
            "layer", "max raw γ", "max applied", "clipped"
        );
        for (layer, (raw, applied, n)) in per_layer {
            println!("  {layer:<12} {raw:>10.3} {applied:>12.3} {n:>8}");
        }
        if let Some(first) = log.trust.iter().find(|r| r.clipped) {
            println!(
                "  first clip at step {} on {} (γ {:.3} -> {:.3})",
                first.step, first.layer, first.raw_gamma, first.clipped_gamma
            );
        }
        println!(
            "  final test accuracy {:.4}",
            log.final_test_accuracy().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
