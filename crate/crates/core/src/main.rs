fn main() {
    std::process::exit(softwrist::cli::run(std::env::args_os()));
}
