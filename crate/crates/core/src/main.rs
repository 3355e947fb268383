fn main() {
    std::process::exit(stochtest::cli::main());
}
