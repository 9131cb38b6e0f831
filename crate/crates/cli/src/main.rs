use clap::Parser;

fn main() {
    let cli = trajflow_cli::Cli::parse();
    if let Err(err) = trajflow_cli::dispatch(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(trajflow_cli::exit_code(&err));
    }
}
