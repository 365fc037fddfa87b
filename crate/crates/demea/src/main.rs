fn main() {
    std::process::exit(demea::cli::run());
}
