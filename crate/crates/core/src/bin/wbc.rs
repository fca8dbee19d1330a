use wasserstein_consensus::cli;

fn main() {
    cli::init_logging();
    std::process::exit(cli::main_with_args(std::env::args_os()));
}
