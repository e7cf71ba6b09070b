fn main() {
    std::process::exit(pbi_cli::run(std::env::args_os()));
}
