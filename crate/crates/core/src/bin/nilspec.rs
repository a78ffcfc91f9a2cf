fn main() {
    std::process::exit(nilspec::cli::run(std::env::args_os()));
}
