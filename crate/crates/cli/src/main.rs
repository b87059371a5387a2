use clap::Parser;

fn main() {
    let cli = sgflow_cli::Cli::parse();
    if let Err(e) = sgflow_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
