fn main() {
    std::process::exit(shallow_gt::cli::run(std::env::args_os()));
}
