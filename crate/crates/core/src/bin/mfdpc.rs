fn main() {
    std::process::exit(perimeter_adp::experiments::cli::run(std::env::args_os()));
}
