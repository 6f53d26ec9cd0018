fn main() {
    std::process::exit(infostat::cli::main());
}
