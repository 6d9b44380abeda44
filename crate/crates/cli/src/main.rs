mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { seed: cli.seed, progress: cli.progress };
    match &cli.command {
        Command::Train(a) => commands::train(a, &ctx),
        Command::Predict(a) => commands::predict_cmd(a, &ctx),
        Command::Cv(a) => commands::cv(a, &ctx),
        Command::Cvgrid(a) => commands::cvgrid(a, &ctx),
        Command::Varsel(a) => commands::varsel(a, &ctx),
        Command::Covtest(a) => commands::covtest(a, &ctx),
        Command::Pdp(a) => commands::pdp(a),
        Command::Importance(a) => commands::importance(a, &ctx),
        Command::Interactions(a) => commands::interactions(a),
        Command::Diagnostics(a) => commands::diagnostics(a),
        Command::RmseByTrees(a) => commands::rmse_by_trees(a, &ctx),
        Command::SimulateFriedman(a) => commands::simulate(a, &ctx),
        Command::Export(a) => commands::export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let text: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            let text = text.join(" ");
            eprintln!("{}", CliError::usage(text.trim_start_matches("error: ")).to_json_line());
            return ExitCode::from(64);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.kind as u8)
        }
    }
}
