use clap::Parser;

fn main() {
    std::process::exit(wavehom_cli::run(wavehom_cli::Cli::parse()));
}
