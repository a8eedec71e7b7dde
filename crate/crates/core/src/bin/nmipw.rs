fn main() {
    std::process::exit(nmipw::cli::main_with_args(std::env::args_os()));
}
