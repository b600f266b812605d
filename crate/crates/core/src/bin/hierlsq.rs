fn main() {
    std::process::exit(hierlsq::cli::main_with_args(std::env::args_os()));
}
