fn main() {
    std::process::exit(fracperron::cli::main_with_args(std::env::args_os()));
}
