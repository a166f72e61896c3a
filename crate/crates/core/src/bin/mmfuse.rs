fn main() {
    std::process::exit(mmfuse::cli::run(std::env::args_os()));
}
