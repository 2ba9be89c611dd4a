fn main() {
    std::process::exit(dual_cli::run(std::env::args_os()));
}
