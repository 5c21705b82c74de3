fn main() {
    std::process::exit(ppath_cli::run_cli(std::env::args_os()));
}
