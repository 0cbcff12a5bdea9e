fn main() {
    std::process::exit(terranav::cli::main());
}
