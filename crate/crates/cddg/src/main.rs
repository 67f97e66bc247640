fn main() {
    std::process::exit(cddg::cli::run());
}
