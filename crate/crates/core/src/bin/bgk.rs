fn main() {
    std::process::exit(bgk_core::cli::main_from(std::env::args_os()));
}
