fn main() {
    std::process::exit(triplace_cli::run(std::env::args_os()));
}
