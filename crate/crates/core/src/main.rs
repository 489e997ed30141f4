fn main() {
    std::process::exit(cryocolor::cli::run(std::env::args_os()));
}
