fn main() {
    std::process::exit(facegps::cli::run(std::env::args_os()));
}
