fn main() {
    std::process::exit(bcns::io::cli::run(std::env::args_os()));
}
