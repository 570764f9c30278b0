fn main() {
    std::process::exit(tao::cli::main());
}
