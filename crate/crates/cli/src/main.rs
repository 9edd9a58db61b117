fn main() {
    std::process::exit(petra_cli::run(std::env::args_os()));
}
