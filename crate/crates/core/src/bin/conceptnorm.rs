fn main() {
    std::process::exit(conceptnorm::cli::run(std::env::args_os()));
}
