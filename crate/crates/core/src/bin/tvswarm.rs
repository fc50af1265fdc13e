use clap::Parser;
use tvswarm::cli::{configure_threads, execute, Cli, EXIT_VALIDATION};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(EXIT_VALIDATION);
    }
    std::process::exit(execute(&cli));
}
