fn main() {
    std::process::exit(soma_core::cli::run(std::env::args_os()));
}
