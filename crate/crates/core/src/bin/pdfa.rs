fn main() {
    std::process::exit(pdfa_learn::harness::cli::main_from_args(std::env::args_os()));
}
