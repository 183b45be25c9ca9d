fn main() {
    std::process::exit(corpusforge::cli::run_from(std::env::args_os()));
}
