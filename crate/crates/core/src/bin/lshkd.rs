fn main() {
    std::process::exit(lshkd::cli::run(std::env::args_os()));
}
