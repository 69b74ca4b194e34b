fn main() {
    std::process::exit(wct::cli::main());
}
