fn main() {
    std::process::exit(sparselab::cli::main_with_args(std::env::args_os()));
}
