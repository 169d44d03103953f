fn main() {
    std::process::exit(ccc_cli::run(std::env::args_os()));
}
