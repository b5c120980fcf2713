fn main() {
    std::process::exit(qnn_core::cli::main_with_args(std::env::args_os()));
}
