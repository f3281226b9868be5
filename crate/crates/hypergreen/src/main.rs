use clap::Parser;
use hypergreen::cli::{error_json, run, Cli};

fn main() {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    };
    std::process::exit(code);
}
