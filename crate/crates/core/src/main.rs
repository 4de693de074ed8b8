fn main() {
    std::process::exit(flatflow::cli::run(std::env::args_os()));
}
