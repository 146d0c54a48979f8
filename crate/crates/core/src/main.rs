fn main() {
    std::process::exit(orbitforge::cli::main_with_args(std::env::args_os()));
}
