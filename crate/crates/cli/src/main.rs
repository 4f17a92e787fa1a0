fn main() {
    std::process::exit(treebranch_cli::main_with_args(std::env::args_os()));
}
