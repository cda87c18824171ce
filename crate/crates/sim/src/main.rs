use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corridor_sim::{builtin, builtin_scenarios, resolve, run_scenario, write_outputs, OutputOptions, RunOptions, ScenarioFile};

#[derive(Parser)]
#[command(name = "corridor", about = "Run multi-agent corridor planning scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file or a builtin (open, intersection, unstructured, walled_in).
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Agent count for builtins; keeps the first N agents of a file.
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        metrics_only: bool,
        /// Run agent cycles of a tick on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// List builtin scenarios.
    Builtins,
}

fn load(name: &str, seed: Option<u64>, agents: Option<usize>) -> Result<ScenarioFile, String> {
    let path = PathBuf::from(name);
    if !path.exists() {
        if let Some(f) = builtin(name, seed.unwrap_or(0), agents) {
            return Ok(f);
        }
        return Err(format!("{name}: no such file or builtin"));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{name}: {e}"))?;
    let mut f: ScenarioFile = serde_json::from_str(&text).map_err(|e| format!("{name}: scenario schema violation: {e}"))?;
    if let Some(s) = seed {
        f.seed = s;
    }
    if let Some(n) = agents {
        if n > f.agents.len() {
            return Err(format!("{name}: only {} agents defined", f.agents.len()));
        }
        f.agents.truncate(n);
    }
    Ok(f)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Builtins => {
            let mut stdout = std::io::stdout().lock();
            for n in builtin_scenarios() {
                // A closed pipe (e.g. `| head`) is not an error for a listing.
                if writeln!(stdout, "{n}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run { scenario, out, seed, agents, duration, plots, metrics_only, parallel } => {
            let result = load(&scenario, seed, agents).and_then(|mut f| {
                if let Some(d) = duration {
                    f.duration = d;
                }
                let s = resolve(f).map_err(|e| e.to_string())?;
                let o = run_scenario(&s, &RunOptions { parallel }).map_err(|e| e.to_string())?;
                write_outputs(&out, &s, &o.record.samples, &o.cycles, &o.metrics, OutputOptions { plots, metrics_only })
                    .map_err(|e| format!("{}: {e}", out.display()))?;
                Ok(o.metrics)
            });
            match result {
                Ok(m) => {
                    // metrics.json is already on disk, so a closed stdout only loses the echo.
                    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
                    if m.is_clean() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("{} collision events, {} fallback cycles", m.collision_events.len(), m.fallback_cycles);
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
