fn main() {
    std::process::exit(evball::cli::run(std::env::args_os().skip(1)));
}
