use std::io;

use clap::Parser;
use reactorkit_gateway::cli::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = cli::run(cli, &mut io::stdout().lock());
    std::process::exit(code);
}
