fn main() {
    std::process::exit(xrl_core::cli::run_from(std::env::args_os()));
}
