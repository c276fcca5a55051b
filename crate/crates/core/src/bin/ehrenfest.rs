fn main() {
    std::process::exit(ehrenfest_core::cli::main_with_args(std::env::args_os()));
}
