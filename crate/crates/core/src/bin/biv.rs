fn main() {
    std::process::exit(bootimpute::cli::run(std::env::args_os()));
}
