fn main() {
    std::process::exit(swellcp::cli::main_with_args(std::env::args_os()));
}
