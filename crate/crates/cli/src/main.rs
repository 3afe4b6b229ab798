use clap::Parser;
use eqv2i_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("eqv2i {}: {e}", cli.command.name());
        std::process::exit(e.exit_code());
    }
}
