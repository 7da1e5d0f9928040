fn main() {
    std::process::exit(condbell::cli::run(std::env::args_os()));
}
