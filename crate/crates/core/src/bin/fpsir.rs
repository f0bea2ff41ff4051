fn main() {
    std::process::exit(fpsir::cli::run_cli(std::env::args_os()));
}
