use clap::Parser;

fn main() {
    let cli = adpo::cli::Cli::parse();
    if let Err(e) = adpo::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
