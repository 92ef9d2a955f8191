fn main() {
    std::process::exit(leafx::cli::run(std::env::args_os()));
}
