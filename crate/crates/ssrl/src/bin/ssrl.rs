use clap::Parser;
use ssrl::cli::{init_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|()| run(cli)) {
        eprintln!("ssrl: {e}");
        std::process::exit(e.exit_code());
    }
}
