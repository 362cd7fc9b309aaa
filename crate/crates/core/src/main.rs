fn main() {
    std::process::exit(kcnn::cli::main_with_args(std::env::args_os()));
}
