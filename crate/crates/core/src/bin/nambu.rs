use clap::Parser;
use nambu_core::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    if let Err(e) = execute(&cli, &mut stdout.lock(), &mut stderr.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
