fn main() {
    std::process::exit(lidarmap::cli::main_with_args(std::env::args_os()));
}
