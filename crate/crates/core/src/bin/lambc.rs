use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lambc::harness::{self, ExperimentConfig};
use lambc::telemetry::fmt_f64;
use lambc::{Error, Result};

#[derive(Parser)]
#[command(name = "lambc", version, about = "LAMB / LAMBC optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its telemetry.
    Run(ConfigArgs),
    /// Run the cartesian product of the sweep axes and write a comparison report.
    Sweep(ConfigArgs),
    /// Compare analytic and finite-difference gradients per layer.
    Gradcheck(ConfigArgs),
    /// Re-verify a run directory's trust-ratio telemetry.
    Audit {
        /// Run directory containing trust_ratios.csv and config.json.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "LAMBC_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Field override, `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("train.seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output.dir={}", toml_string(&out.display().to_string())));
        }
        match &self.config {
            Some(path) => ExperimentConfig::from_file(path, &overrides),
            None => ExperimentConfig::parse("", &overrides),
        }
    }
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "-".into())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let log = harness::run(&cfg)?;
            println!(
                "{}: {} steps, final train loss {}, final test accuracy {}",
                log.run_id,
                log.last_step(),
                opt(log.final_train_loss()),
                opt(log.final_test_accuracy())
            );
            println!("wrote {}", cfg.output.dir.display());
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            let outcome = harness::sweep(&cfg)?;
            print!("{}", outcome.report.to_csv());
            for note in &outcome.report.observations {
                println!("# {note}");
            }
            println!("{} runs, report in {}", outcome.runs.len(), cfg.output.dir.display());
        }
        Command::Gradcheck(args) => {
            let cfg = args.load()?;
            let report = harness::gradcheck(&cfg)?;
            println!("layer,worst_rel_error,result");
            let mut layers: Vec<&str> = report.rows.iter().map(|r| r.layer.as_str()).collect();
            layers.dedup();
            let mut seen = std::collections::BTreeSet::new();
            for layer in layers.into_iter().filter(|l| seen.insert(*l)) {
                let rows: Vec<_> = report.rows.iter().filter(|r| r.layer == layer).collect();
                let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
                let ok = rows.iter().all(|r| r.passed);
                println!("{layer},{},{}", fmt_f64(worst), if ok { "pass" } else { "FAIL" });
            }
            if !report.passed() {
                return Err(Error::Audit(
                    report
                        .failing_layers()
                        .iter()
                        .map(|l| format!("gradient check failed for layer `{l}`"))
                        .collect(),
                ));
            }
        }
        Command::Audit { dir } => {
            let report = harness::audit(&dir)?;
            for v in &report.violations {
                println!("{v}");
            }
            println!(
                "{} rows checked, {} violations",
                report.rows_checked,
                report.violations.len()
            );
            report.into_result()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
