fn main() {
    std::process::exit(equisr::cli::run(std::env::args_os()));
}
