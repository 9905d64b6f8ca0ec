fn main() {
    std::process::exit(augsens::cli::run_cli(std::env::args_os()));
}
