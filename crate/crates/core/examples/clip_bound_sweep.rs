//! Upper-bound sweep: clip_upper in {1, 3, 5, 10} against the unclipped arm,
//! averaged over seeds. Pass the seed count as the first argument.
//!
//!     cargo run --release --example clip_bound_sweep -- 5

use lambc::harness::{self, ExperimentConfig};

fn main() -> lambc::Result<()> {
    let seeds: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let dir = tempfile::tempdir().expect("temp dir");
    let seed_list: Vec<String> = (0..seeds).map(|s| s.to_string()).collect();
    let text = format!(
        "optimizer.algorithm = \"lambc\"\ndata.batch_size = \"n/4\"\n[sweep]\nclip_upper = [1, 3, 5, 10, inf]\nseed = [{}]\n",
        seed_list.join(", ")
    );
    let config = ExperimentConfig::parse(&text, &[format!("output.dir = \"{}\"", dir.path().display())])?;
    let outcome = harness::sweep(&config)?;

    println!("{} runs", outcome.runs.len());
    print!("{}", outcome.report.to_csv());
    for note in &outcome.report.observations {
        println!("note: {note}");
    }
    Ok(())
}
