fn main() {
    std::process::exit(revhist_cli::main_with_args(std::env::args_os()));
}
