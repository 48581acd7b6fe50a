fn main() {
    std::process::exit(mbpc::cli::run(std::env::args_os()));
}
