fn main() {
    std::process::exit(fpcadeconv::cli::main_with_args(std::env::args_os()));
}
