fn main() {
    std::process::exit(tinycnn::cli::run(std::env::args_os()));
}
