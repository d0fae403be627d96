fn main() {
    std::process::exit(recomed_cli::run(std::env::args_os()));
}
