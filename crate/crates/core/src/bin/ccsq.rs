fn main() {
    std::process::exit(ccsq::cli::run(std::env::args_os()));
}
