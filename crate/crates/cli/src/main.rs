//! `magsq`: command-line front end for the conditional magnon squeezing scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magnon_squeeze::scenarios::{self, Action, Overrides, ScenarioConfig, ScenarioKind};
use magnon_squeeze::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "magsq", version, about = "Qubit-conditioned magnon squeezing simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fock-space truncation (overrides `fock_dim`).
    #[arg(long = "fock-dim", global = true)]
    fock_dim: Option<usize>,
    /// Scenario name (overrides `scenario`).
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Exit with status 4 when the truncation convergence check is flagged.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Coupling strength maps (coupling_map_a, coupling_map_b).
    CouplingMap,
    /// Full versus effective squeezing dynamics (squeeze_compare, custom).
    Squeeze,
    /// Peak squeezing against damping or temperature (kappa_sweep, temperature_sweep).
    Sweep,
    /// Maximum squeezing over magnon and qubit damping (max_squeeze_heatmap).
    Heatmap,
    /// Analytic squeezed-state superpositions with norm diagnostics.
    Superpose,
    /// Wigner functions of the post-selected superpositions (superposition_wigner).
    Wigner,
    /// Fidelity of the dissipative superpositions (superposition_fidelity).
    Fidelity,
    /// Scan of the effective detuning against the full model.
    Calibrate,
    /// Truncation convergence report for the configured scenario.
    Converge,
}

impl Command {
    /// Scenarios the subcommand accepts; the first is its default.
    fn scenarios(self) -> &'static [ScenarioKind] {
        use ScenarioKind::*;
        match self {
            Command::CouplingMap => &[CouplingMapA, CouplingMapB],
            Command::Squeeze => &[SqueezeCompare, Custom],
            Command::Sweep => &[KappaSweep, TemperatureSweep],
            Command::Heatmap => &[MaxSqueezeHeatmap],
            Command::Wigner => &[SuperpositionWigner],
            Command::Fidelity => &[SuperpositionFidelity],
            Command::Superpose | Command::Calibrate => &[SqueezeCompare],
            Command::Converge => &ScenarioKind::ALL,
        }
    }
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let text = match &cli.common.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?),
        None => None,
    };
    let overrides = Overrides {
        scenario: cli.common.scenario.as_deref().map(str::parse).transpose()?,
        default_scenario: Some(cli.command.scenarios()[0]),
        fock_dim: cli.common.fock_dim,
        output_dir: cli.common.out.clone(),
    };
    let cfg = ScenarioConfig::from_layers(text.as_deref(), std::env::vars(), &overrides)?;
    let allowed = cli.command.scenarios();
    let scenario_matters = !matches!(cli.command, Command::Superpose | Command::Calibrate);
    if scenario_matters && !allowed.contains(&cfg.scenario) {
        let names: Vec<&str> = allowed.iter().map(|k| k.name()).collect();
        return Err(Error::Config {
            path: "scenario".into(),
            message: format!("`{}` does not belong to this subcommand (expected one of {})", cfg.scenario, names.join(", ")),
        });
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) => EXIT_CONFIG,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let action = match cli.command {
        Command::Superpose => Action::Superpose,
        Command::Calibrate => Action::Calibrate,
        Command::Converge => Action::Converge,
        _ => Action::Scenario(cfg.scenario),
    };
    match scenarios::run_action(&cfg, action) {
        Ok(manifest) => {
            let report = serde_json::json!({
                "action": manifest.action,
                "manifest": scenarios::manifest_path(&cfg),
                "summary": manifest.summary,
                "convergence": manifest.convergence,
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            if cli.common.strict && manifest.convergence.flagged {
                eprintln!("error: truncation convergence check flagged (--strict)");
                return ExitCode::from(EXIT_CONVERGENCE);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
