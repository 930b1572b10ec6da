fn main() {
    std::process::exit(algd_lab::cli::run(std::env::args_os()));
}
