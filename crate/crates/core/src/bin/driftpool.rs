fn main() {
    std::process::exit(driftpool::cli::main_from(std::env::args_os()));
}
