use clap::Parser;
use simloc::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("simloc: {e}");
        std::process::exit(e.exit_code());
    }
}
