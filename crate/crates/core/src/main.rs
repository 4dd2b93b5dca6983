fn main() {
    std::process::exit(parpath::cli::run(std::env::args_os()));
}
