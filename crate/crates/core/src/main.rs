fn main() {
    std::process::exit(faaslab::cli::main_with_args(std::env::args_os()));
}
