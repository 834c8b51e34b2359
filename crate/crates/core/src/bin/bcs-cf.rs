fn main() {
    std::process::exit(bcs_cf::cli::main_with_args(std::env::args_os()));
}
