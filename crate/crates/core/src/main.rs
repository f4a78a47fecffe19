use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dwellsim::cli::{run_scenario, run_sweep, sweep_status, ExitStatus, SweepParam};
use dwellsim::config::ScenarioFile;
use dwellsim::engine::Variant;
use dwellsim::SimError;

#[derive(Parser)]
#[command(name = "dwellsim", version, about = "Switched-system tracking simulator with intermittent GPS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the disturbance seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides outputs.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Estimation variant.
    #[arg(long, global = true)]
    variant: Option<Variant>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, switches.csv and dwell.csv.
    Run { config: PathBuf },
    /// Run the scenario once per value of a scalar and write summary.csv.
    Sweep {
        config: PathBuf,
        /// One of d_bar, k_theta, N, lambda_bar, V_u.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn load(path: &PathBuf, cli: &Cli) -> Result<ScenarioFile, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
    let mut file = ScenarioFile::from_json(&text)?;
    if let Some(seed) = cli.seed {
        file.engine.seed = seed;
    }
    if let Some(v) = cli.variant {
        file.estimator.variant = v;
    }
    if let Some(out) = &cli.out {
        file.outputs.directory = out.clone();
    }
    Ok(file)
}

fn execute(cli: &Cli) -> Result<ExitStatus, SimError> {
    match &cli.command {
        Command::Run { config } => {
            let file = load(config, cli)?;
            let scenario = file.build()?;
            let out = run_scenario(&scenario, &file.outputs.directory)?;
            if let Some(e) = &out.error {
                eprintln!("error: {e}");
            }
            if let Some(t) = out.trace.as_ref().and_then(|t| t.safety_violation) {
                eprintln!("safety violation: V exceeded V_u at t = {t}");
            }
            if let Some(s) = &out.summary {
                println!(
                    "denied intervals completed {}, mean budget {:.4} s, max budget {:.4} s, max V {:.4e}, final |theta_tilde| {:.4}",
                    s.denied_completed, s.mean_budget, s.max_budget, s.max_v, s.final_theta_tilde
                );
            }
            Ok(out.status)
        }
        Command::Sweep { config, param, values } => {
            let param: SweepParam = param.parse()?;
            let file = load(config, cli)?;
            let rows = run_sweep(&file, param, values, &file.outputs.directory)?;
            for r in &rows {
                println!(
                    "{}={} status {} max budget {:.4} max V {:.4e}",
                    r.param, r.value, r.summary.status, r.summary.max_budget, r.summary.max_v
                );
            }
            Ok(sweep_status(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match execute(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::of_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}
