fn main() {
    std::process::exit(evmc::cli::run(std::env::args_os()));
}
