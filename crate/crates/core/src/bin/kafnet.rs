fn main() {
    std::process::exit(kafnet::cli::run(std::env::args_os()));
}
