fn main() {
    std::process::exit(bellman_power::cli::main_with_args(std::env::args_os()));
}
