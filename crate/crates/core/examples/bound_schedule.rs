//! The clip band over time: constant bounds versus the envelope schedule that
//! starts wide and closes in on [clip_lower, clip_upper].
//!
//!     cargo run --release --example bound_schedule

use lambc::{bound_schedule, clip_trust_ratio, BoundSchedule};

fn main() -> lambc::Result<()> {
    let (lower, upper) = (0.5, 2.0);
    println!("{:>6} {:>12} {:>12} {:>14}", "step", "lower", "upper", "clip(5.0)");
    for t in [1u64, 2, 5, 10, 50, 100, 1000, 10000] {
        let (lo, hi) = bound_schedule(t, BoundSchedule::Envelope { rate: 0.1 }, lower, upper)?;
        println!("{t:>6} {lo:>12.5} {hi:>12.5} {:>14.5}", clip_trust_ratio(5.0, lo, hi)?);
    }
    let (lo, hi) = bound_schedule(1, BoundSchedule::Constant, lower, upper)?;
    println!("constant schedule: [{lo}, {hi}] at every step");
    for gamma in [0.1, 1.0, 2.5] {
        println!("clip({gamma}) in [0, 1] = {}", clip_trust_ratio(gamma, 0.0, 1.0)?);
    }
    Ok(())
}
