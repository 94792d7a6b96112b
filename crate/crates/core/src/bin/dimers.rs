use clap::Parser;
use fock_dimers::cli::{load_config, run, CliOptions, Command};
use fock_dimers::output::to_json;
use std::path::PathBuf;
use std::process::ExitCode;

/// Dimer pipeline on Schottky M-curves: validate, amoeba, ronkin, weights, sample, selftest.
#[derive(Parser, Debug)]
#[command(name = "dimers", version)]
struct Args {
    /// validate | amoeba | ronkin | weights | sample | selftest
    command: String,
    /// TOML run configuration (optional for selftest)
    config: Option<PathBuf>,
    /// Output directory, overriding `outputs.directory`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Chain seed, overriding `chain.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Fail validation when the weights are not periodic
    #[arg(long)]
    require_periodic: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = (|| {
        let cmd: Command = args.command.parse()?;
        let config = args.config.as_deref().map(load_config).transpose()?;
        let opts = CliOptions { out: args.out.clone(), seed: args.seed, require_periodic: args.require_periodic };
        run(cmd, config, &opts)
    })();
    match result {
        Ok(outcome) => {
            match to_json(&outcome.summary) {
                Ok(s) if outcome.code != 0 || matches!(outcome.summary.command, "validate" | "selftest") => print!("{s}"),
                Ok(_) => {
                    let dir = outcome.out_dir.map(|d| d.display().to_string()).unwrap_or_default();
                    println!("{}: wrote {} to {dir}", outcome.summary.command, outcome.summary.files.join(", "));
                }
                Err(e) => eprintln!("error: {e}"),
            }
            for c in outcome.summary.checks.iter().filter(|c| !c.pass) {
                let note = if c.required { "" } else { " (not required)" };
                eprintln!("check {} failed{note}: {}", c.name, c.detail);
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
