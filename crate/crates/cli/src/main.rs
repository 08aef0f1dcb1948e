use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cylflow_cli::run::{self, exit, verify_exit_code};
use cylflow_cli::{load_config, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "cylflow",
    version,
    about = "Steady rotational Euler flow through a circular cylinder"
)]
struct Cli {
    /// Suppress per-iteration progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, export fields and write a report.
    Run { config: PathBuf },
    /// Check hypotheses and operator invariants without iterating.
    Verify { config: PathBuf },
    /// Bisect the inflow amplitude for the admissible data size K1.
    #[command(name = "calibrate-k1")]
    CalibrateK1 { config: PathBuf },
    /// Measure solution stability over random pairs of inflow data.
    #[command(name = "probe-lipschitz")]
    ProbeLipschitz { config: PathBuf, n_pairs: usize },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    Ok(load_config(path)?)
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config)?;
            let quiet = cli.quiet;
            let mut progress = |r: &cylflow::euler::IterationRecord| {
                if !quiet {
                    let ratio = r.ratio.map_or("-".to_string(), |x| format!("{x:.4}"));
                    eprintln!(
                        "iter {:3}  update {:.3e}  ratio {ratio}  momentum {:.3e}",
                        r.iter, r.update_norm, r.momentum_res
                    );
                }
            };
            let rep = run::run(&cfg, &mut progress)?;
            match &rep.error {
                None => println!("converged in {} iterations", rep.history.len()),
                Some(e) => println!("{e}"),
            }
            if let Some(h) = &rep.violated_hypothesis {
                println!("violated hypothesis: {h}");
            }
            if let Some(o) = &rep.oracle {
                println!(
                    "columnar oracle: velocity {:.3e}, pressure {:.3e}, vorticity {:.3e} (relative L2)",
                    o.velocity_rel_l2, o.pressure_rel_l2, o.vorticity_rel_l2
                );
            }
            println!("report: {}", cfg.output_dir().join("report.json").display());
            Ok(rep.exit_code)
        }
        Command::Verify { config } => {
            let rep = run::verify(&load(config)?)?;
            for c in &rep.checks {
                println!(
                    "{:4} {:30} {:.3e} (limit {:.3e}){}",
                    if c.passed { "ok" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold,
                    if c.hypothesis { "  [hypothesis]" } else { "" }
                );
            }
            Ok(verify_exit_code(&rep))
        }
        Command::CalibrateK1 { config } => {
            let cfg = load(config)?;
            let cal = run::calibrate(&cfg)?;
            for p in &cal.probes {
                match (p.ratio, &p.violation) {
                    (Some(r), _) => println!(
                        "amplitude {:.6e}  data size {:.6e}  ratio {r:.4}",
                        p.amplitude, p.data_size
                    ),
                    (None, Some(v)) => println!("amplitude {:.6e}  data size {:.6e}  {v}", p.amplitude, p.data_size),
                    (None, None) => {}
                }
            }
            println!(
                "K1 = {:.6e} at amplitude {:.6e} (ratio {:.4})",
                cal.k1, cal.amplitude, cal.ratio
            );
            println!("add to the config:\n[solver]\nk1 = {:e}", cal.k1);
            Ok(exit::CONVERGED)
        }
        Command::ProbeLipschitz { config, n_pairs } => {
            let rep = run::probe_lipschitz(&load(config)?, *n_pairs)?;
            for (i, p) in rep.pairs.iter().enumerate() {
                match (p.velocity, p.pressure) {
                    (Some(v), Some(q)) => println!("pair {i}: velocity ratio {v:.4e}, pressure ratio {q:.4e}"),
                    _ => println!("pair {i}: skipped (identical data)"),
                }
            }
            let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
            println!(
                "K2 ~ {}  K3 ~ {}  spread {} / {}",
                show(rep.k2),
                show(rep.k3),
                show(rep.velocity_spread),
                show(rep.pressure_spread)
            );
            Ok(exit::CONVERGED)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { 0 });
        }
    };
    let code = execute(&cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
