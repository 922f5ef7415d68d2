fn main() {
    std::process::exit(rdcompete::cli::run_cli(std::env::args_os()));
}
