fn main() {
    std::process::exit(betaflow::cli::parse_and_dispatch(std::env::args_os()));
}
