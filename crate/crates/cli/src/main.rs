fn main() {
    std::process::exit(titlegen_cli::run(std::env::args_os().skip(1)));
}
