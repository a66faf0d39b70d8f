fn main() {
    std::process::exit(fer_cli::run(std::env::args_os()));
}
