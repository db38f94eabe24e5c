fn main() {
    std::process::exit(coherent_lifespans::cli::main_with_args(std::env::args_os()));
}
