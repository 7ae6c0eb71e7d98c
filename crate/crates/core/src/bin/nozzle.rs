fn main() {
    std::process::exit(nozzle_core::cli_io::run_cli(std::env::args_os()));
}
