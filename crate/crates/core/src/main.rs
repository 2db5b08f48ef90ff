fn main() {
    std::process::exit(cl4ac::cli::run(std::env::args_os()));
}
