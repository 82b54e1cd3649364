fn main() {
    std::process::exit(popcoupling::cli::run(std::env::args_os()));
}
