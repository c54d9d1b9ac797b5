fn main() {
    std::process::exit(hodge_forms::cli::run_command(std::env::args_os()));
}
