fn main() {
    std::process::exit(uav2x_core::cli::main_with_args(std::env::args_os()));
}
