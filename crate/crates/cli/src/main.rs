use clap::Parser;

fn main() {
    let cli = enskit_cli::Cli::parse();
    if let Err(err) = enskit_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
