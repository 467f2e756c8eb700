fn main() {
    std::process::exit(biolab_cli::run(std::env::args_os()));
}
