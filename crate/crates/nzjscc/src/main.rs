fn main() {
    std::process::exit(nzjscc::cli::run());
}
