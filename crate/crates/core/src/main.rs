fn main() {
    std::process::exit(cvtele::cli::main_with_args(std::env::args_os()));
}
