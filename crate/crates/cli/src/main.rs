use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = elid_cli::cli::Cli::parse();
    if let Err(e) = elid_cli::cli::run(cli) {
        eprintln!("error: {}: {}", e.name, e.message);
        std::process::exit(1);
    }
}
