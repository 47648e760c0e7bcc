fn main() {
    std::process::exit(lazybo::cli::main_with_args(std::env::args_os()));
}
