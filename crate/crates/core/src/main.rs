fn main() {
    std::process::exit(bellsim::cli::run(std::env::args_os()));
}
