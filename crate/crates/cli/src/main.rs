fn main() {
    std::process::exit(cfme_cli::run(std::env::args_os()));
}
