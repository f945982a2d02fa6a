fn main() {
    std::process::exit(oswb::cli::main_with_args(std::env::args_os()));
}
