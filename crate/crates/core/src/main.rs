fn main() {
    std::process::exit(coopia::cli::run(std::env::args_os()));
}
