fn main() {
    std::process::exit(scramble_core::cli::run(std::env::args()));
}
