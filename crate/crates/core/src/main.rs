use clap::Parser;
use levy_rbdsde::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
