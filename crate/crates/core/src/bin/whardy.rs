fn main() {
    std::process::exit(whardy::cli::main_with_args(std::env::args_os()));
}
