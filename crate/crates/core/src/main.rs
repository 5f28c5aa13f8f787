fn main() {
    std::process::exit(sptmle::cli::run());
}
