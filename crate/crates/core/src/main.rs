fn main() {
    std::process::exit(vorstab::cli::main_with(std::env::args_os()));
}
