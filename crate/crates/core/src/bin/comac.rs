fn main() {
    std::process::exit(comac::cli::main_with(std::env::args_os()));
}
