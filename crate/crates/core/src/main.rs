fn main() {
    std::process::exit(lcskit::cli::main_with(std::env::args_os()));
}
