fn main() {
    std::process::exit(csp_refute::cli::run(std::env::args_os()));
}
