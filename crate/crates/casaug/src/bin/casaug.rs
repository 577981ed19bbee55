use clap::Parser;

fn main() {
    let cli = casaug::cli::Cli::parse();
    if let Err(e) = casaug::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
