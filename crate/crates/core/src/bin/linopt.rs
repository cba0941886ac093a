fn main() {
    std::process::exit(linopt::experiments::cli(std::env::args_os()));
}
