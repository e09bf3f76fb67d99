fn main() {
    std::process::exit(stairward::cli::main_with(std::env::args_os()));
}
