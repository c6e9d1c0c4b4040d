fn main() {
    std::process::exit(entpack_cli::run(std::env::args_os()));
}
