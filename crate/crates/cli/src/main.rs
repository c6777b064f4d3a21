fn main() {
    std::process::exit(equilens_cli::run());
}
