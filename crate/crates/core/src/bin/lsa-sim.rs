fn main() {
    std::process::exit(lsa_core::cli::run_from_args(std::env::args_os()));
}
