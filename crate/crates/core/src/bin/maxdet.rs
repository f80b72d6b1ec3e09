fn main() {
    std::process::exit(maxdet::cli::run(std::env::args_os()));
}
