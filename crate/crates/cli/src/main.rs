use clap::Parser;

fn main() {
    let cli = tomosar_cli::Cli::parse();
    if let Err(e) = tomosar_cli::run(cli) {
        eprintln!("tomosar: {e}");
        std::process::exit(e.exit_code());
    }
}
