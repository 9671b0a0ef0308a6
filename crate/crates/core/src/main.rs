fn main() {
    std::process::exit(inverse_forge::cli::run(std::env::args_os()));
}
