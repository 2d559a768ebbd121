use clap::Parser;
use hmx_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("hmx {}: {e}", cli.command.name());
            std::process::exit(e.exit_code());
        }
    }
}
