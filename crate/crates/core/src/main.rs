use clap::Parser;

use dcsim::cli::{execute, Cli, CliOptions};

fn main() {
    let opts = CliOptions::from(Cli::parse());
    let code = execute(
        &opts,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
