fn main() {
    std::process::exit(didlab::cli::run(std::env::args_os()));
}
