fn main() {
    std::process::exit(lconv::cli::run(std::env::args_os()));
}
