use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ehrchain::cli::{self, CliError};
use ehrchain::crypto::Address;

#[derive(Parser)]
#[command(name = "ehrchain", version, about = "Multilevel record sharing over a simulated ledger")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run declarative scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    /// Attacker-model calculations.
    Analyze {
        #[command(subcommand)]
        action: AnalyzeCmd,
    },
    /// Inspect exported chains.
    Audit {
        #[command(subcommand)]
        action: AuditCmd,
    },
    /// Gas reports.
    Report {
        #[command(subcommand)]
        action: ReportCmd,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Replay success probability, exact and simulated, as CSV.
    Replay {
        #[arg(long)]
        q: String,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum AuditCmd {
    /// LogAnnounce and LogKeys events in chain order.
    Events {
        #[arg(long)]
        chain: PathBuf,
        /// Staff address, hex.
        #[arg(long)]
        staff: Option<String>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    Costs {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Scenario {
            action: ScenarioCmd::Run { config, out },
        } => {
            let outcome = cli::run_scenario(&config, &out)?;
            for s in &outcome.staff {
                let level = s.granted.map(|l| l.to_string()).unwrap_or_else(|| "none".into());
                println!("{}\t{}\tlevel {}\tsegments {}", s.id, s.address, level, s.recovered.len());
            }
            println!("reports written to {}", out.display());
        }
        Command::Analyze {
            action: AnalyzeCmd::Replay { q, n, trials, seed },
        } => {
            let row = cli::analyze_replay(&q, n, trials, seed)?;
            print!("{}", String::from_utf8_lossy(&cli::to_csv(&[row])));
        }
        Command::Audit {
            action: AuditCmd::Events { chain, staff },
        } => {
            let staff: Option<Address> = staff
                .map(|s| s.parse().map_err(|e| CliError::Config(format!("--staff: {e}"))))
                .transpose()?;
            let chain = cli::load_chain(&chain)?;
            print!("{}", cli::render_audit_table(&cli::audit_events(&chain, staff.as_ref())));
        }
        Command::Report {
            action: ReportCmd::Costs { out },
        } => {
            let (rows, trends) = cli::report_costs(&out)?;
            println!("{} rows written to {}", rows.len(), out.display());
            for t in trends {
                println!("{} {}", if t.holds { "ok  " } else { "FAIL" }, t.name);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
