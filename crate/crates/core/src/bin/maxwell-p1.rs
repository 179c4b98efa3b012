fn main() {
    std::process::exit(maxwell_p1::cli::main_with_args(std::env::args_os()));
}
