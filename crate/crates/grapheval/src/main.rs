fn main() {
    std::process::exit(grapheval::cli::run());
}
