fn main() {
    std::process::exit(hamflow::cli::run_cli(std::env::args_os()));
}
