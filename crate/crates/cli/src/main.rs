fn main() {
    std::process::exit(rct_cli::run(std::env::args_os()));
}
