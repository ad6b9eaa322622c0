fn main() {
    std::process::exit(palmdeid_cli::run(std::env::args_os()));
}
