use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgh_experiments::config::{self, Overrides, Suite};
use pgh_experiments::figures::{run_figure, FigureOutcome};
use pgh_experiments::invariants::{run_invariant_suite, BOUNDED, LEAKAGE, MAJORIZATION, TERMINAL_BOUND};
use pgh_experiments::{calibrate, plot, ExpError, ExperimentConfig};

/// Proximal-gradient homotopy experiments.
#[derive(Parser)]
#[command(name = "pgh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit calibration constants and write `<kind>.calib` records.
    Calibrate(Common),
    /// Sparse convergence sweep.
    Fig1(Common),
    /// Group-sparse convergence sweep.
    Fig2(Common),
    /// Low-rank convergence sweep.
    Fig3(Common),
    /// Leakage and bound invariants on small instances.
    Invariants(Common),
    /// Aggregate trace files into per-scenario plot series.
    Plotdata {
        /// Trace CSV files, one scenario each.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value = "out/plot")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Comma-separated measurement counts.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn configs(&self, suite: Suite) -> Result<Vec<ExperimentConfig>, ExpError> {
        let overrides = Overrides { seeds: self.seed.clone(), m: self.m.clone(), out: self.out.clone() };
        config::load(suite, self.config.as_deref(), &overrides)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<u8, ExpError> {
    match command {
        Command::Calibrate(c) => {
            for cfg in c.configs(Suite::Calibrate)? {
                println!("calibrating {} on seeds {:?}", cfg.kind().name(), cfg.seeds);
                let (cal, path) = calibrate::run_calibration(&cfg)?;
                println!(
                    "  C_dev = {:.4}  C_rho = {:.4}  C_xi = {:.4}  -> {}",
                    cal.c_dev,
                    cal.c_rho,
                    cal.c_xi,
                    path.display()
                );
            }
            Ok(0)
        }
        Command::Fig1(c) => figure(&c, Suite::Fig1),
        Command::Fig2(c) => figure(&c, Suite::Fig2),
        Command::Fig3(c) => figure(&c, Suite::Fig3),
        Command::Invariants(c) => {
            let mut failed = false;
            for cfg in c.configs(Suite::Invariants)? {
                println!("{}: constants {}", cfg.kind().name(), cfg.constants.describe());
                let report = run_invariant_suite(&cfg)?;
                for inv in [LEAKAGE, MAJORIZATION, TERMINAL_BOUND, BOUNDED] {
                    let (bad, total) = (report.violations(inv), report.checked(inv));
                    println!("  {inv:<15} {}/{total} runs pass", total - bad);
                }
                let rho = report.runs.iter().map(|r| r.config.rho);
                let (lo, hi) = rho.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let moved = report
                    .runs
                    .iter()
                    .filter(|r| r.trace.iter().any(|row| row.rel_error.is_some_and(|e| e < 1.0 - 1e-9)))
                    .count();
                println!("  rho in [{lo:.3}, {hi:.3}]; {moved}/{} runs leave x = 0", report.runs.len());
                failed |= !report.all_passed();
                println!("  report: {}", report.files[0].display());
            }
            Ok(if failed { 1 } else { 0 })
        }
        Command::Plotdata { traces, out } => {
            for path in plot::emit_plot_data(&traces, &out)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}

fn figure(c: &Common, suite: Suite) -> Result<u8, ExpError> {
    let cfg = c.configs(suite)?.remove(0);
    let outcome = run_figure(&cfg)?;
    print_summary(&outcome);
    match outcome.first_divergence() {
        Some(run) => Err(ExpError::Diverged { run_id: run.run_id.clone(), at: run.diverged_at.unwrap_or(0) }),
        None => Ok(0),
    }
}

fn print_summary(outcome: &FigureOutcome) {
    println!("constants: {}", outcome.source);
    println!("{:<40} {:>6} {:>16} {:>10}  stop", "run", "iters", "final rel_error", "slope");
    for s in outcome.summary() {
        let err = s.final_rel_error.map_or("-".into(), |e| format!("{e:.3e}"));
        let slope = s.slope.map_or("-".into(), |v| format!("{v:.4}"));
        println!("{:<40} {:>6} {:>16} {:>10}  {}", s.run_id, s.iterations, err, slope, s.stop);
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
}
