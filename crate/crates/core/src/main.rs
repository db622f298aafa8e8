fn main() {
    std::process::exit(splinegee::cli::main_with_args(std::env::args_os()));
}
