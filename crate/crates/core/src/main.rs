fn main() {
    std::process::exit(thermforge::cli::run(std::env::args_os()));
}
