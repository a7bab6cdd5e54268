use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "ems", version, about = "Contingency analysis, corrective switching and security-constrained dispatch")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print stage timings to standard error
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// AC power flow of the base case
    Pf(RunArgs),
    /// N-1 contingency analysis
    Rtca(RunArgs),
    /// Corrective switching search for every critical contingency
    Cts(RunArgs),
    /// Security-constrained dispatch and nodal prices
    Sced {
        #[command(flatten)]
        run: RunArgs,
        /// Relax violated contingency limits with switching pseudo limits
        #[arg(long)]
        pseudo_limits: bool,
    },
    /// Analysis, dispatch and recheck at the new dispatch
    ProcedureA(RunArgs),
    /// Procedure A with corrective switching and pseudo limits
    ProcedureB(RunArgs),
    /// Runs both procedures and reports the differences
    Compare(RunArgs),
}

pub enum Failure {
    /// bad flags, unreadable input or invalid settings
    Usage(String),
    /// the computation itself failed
    Domain(ems_core::Error),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --jobs must be a positive thread count");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Pf(a) => commands::pf(a, cli.timings),
        Command::Rtca(a) => commands::rtca(a, cli.timings),
        Command::Cts(a) => commands::cts(a, cli.timings),
        Command::Sced { run, pseudo_limits } => commands::sced(run, *pseudo_limits, cli.timings),
        Command::ProcedureA(a) => commands::procedure(a, false, cli.timings),
        Command::ProcedureB(a) => commands::procedure(a, true, cli.timings),
        Command::Compare(a) => commands::compare(a, cli.timings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let sub = subcommand_name(&cli.command);
            let mut cmd = Cli::command();
            cmd.build();
            let help = cmd.find_subcommand_mut(sub).map(|c| c.render_usage().to_string()).unwrap_or_default();
            eprintln!("{help}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Pf(_) => "pf",
        Command::Rtca(_) => "rtca",
        Command::Cts(_) => "cts",
        Command::Sced { .. } => "sced",
        Command::ProcedureA(_) => "procedure-a",
        Command::ProcedureB(_) => "procedure-b",
        Command::Compare(_) => "compare",
    }
}
