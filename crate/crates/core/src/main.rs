fn main() {
    std::process::exit(evsnn::cli::main());
}
