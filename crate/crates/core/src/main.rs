fn main() {
    std::process::exit(ulm_core::cli::main_with(std::env::args_os()));
}
