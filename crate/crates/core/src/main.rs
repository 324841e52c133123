use clap::Parser;

fn main() {
    std::process::exit(kipo::cli::app::main_with(kipo::cli::app::Cli::parse()));
}
