fn main() {
    std::process::exit(critval::cli::main_with_args(std::env::args_os()));
}
