fn main() {
    std::process::exit(vdg::cli::main_from(std::env::args_os()));
}
