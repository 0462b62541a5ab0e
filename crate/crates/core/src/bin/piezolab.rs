fn main() {
    std::process::exit(piezolab::cli::run(std::env::args_os()));
}
