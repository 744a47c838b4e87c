fn main() {
    std::process::exit(mfbounds::cli::main_with_args());
}
