fn main() {
    std::process::exit(steklov_lab::cli::parse_and_dispatch(std::env::args_os()));
}
