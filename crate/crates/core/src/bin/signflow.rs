use clap::Parser;

fn main() {
    let cli = signflow::cli::Cli::parse();
    std::process::exit(signflow::cli::main_with(cli));
}
