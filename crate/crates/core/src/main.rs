use clap::Parser;
use membrane_ritz::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
