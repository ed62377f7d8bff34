fn main() {
    std::process::exit(csbm::cli::main());
}
