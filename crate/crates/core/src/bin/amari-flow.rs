fn main() {
    std::process::exit(amari_flow::cli::main_with_args(std::env::args_os()));
}
