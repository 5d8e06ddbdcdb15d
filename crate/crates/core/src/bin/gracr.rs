fn main() {
    std::process::exit(gracr::cli::main());
}
