fn main() {
    std::process::exit(readpath_cli::main_with_args(std::env::args_os()));
}
