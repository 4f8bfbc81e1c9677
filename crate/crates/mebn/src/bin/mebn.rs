fn main() {
    std::process::exit(mebn::cli::run());
}
