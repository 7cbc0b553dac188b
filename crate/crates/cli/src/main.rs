fn main() {
    std::process::exit(hyposc_cli::run(std::env::args_os()));
}
