fn main() {
    std::process::exit(mapgal_cli::run_cli(std::env::args_os()));
}
