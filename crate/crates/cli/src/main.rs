fn main() {
    std::process::exit(drycss_cli::run(std::env::args_os()));
}
