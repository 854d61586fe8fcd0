fn main() {
    std::process::exit(viscolab::cli::main_with_args(std::env::args_os()));
}
