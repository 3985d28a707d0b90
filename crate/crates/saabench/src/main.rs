fn main() {
    std::process::exit(saabench::run_from_env());
}
