fn main() {
    std::process::exit(edgecast::cli::main_with_args(std::env::args_os()));
}
