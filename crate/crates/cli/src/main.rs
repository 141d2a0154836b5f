mod args;
mod commands;

use clap::Parser;

use args::{Cli, Command};
use commands::CliError;

fn threads(cmd: &Command) -> usize {
    match cmd {
        Command::GenErrors(a) => a.common.threads,
        Command::FindCode(a) => a.common.threads,
        Command::Synth(a) => a.common.threads,
        Command::Simulate(a) => a.common.threads,
        Command::RandomStudy(a) => a.common.threads,
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let t = threads(&cli.command);
    if t > 0 && !zeno_core::par::init_threads(t) {
        log::debug!("worker pool already initialized or parallel feature disabled");
    }
    match &cli.command {
        Command::GenErrors(a) => commands::gen_errors(a),
        Command::FindCode(a) => commands::find_code(a),
        Command::Synth(a) => commands::synth(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::RandomStudy(a) => commands::random_study(a),
    }
}

fn main() {
    let argv = match args::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
