fn main() {
    std::process::exit(skelmesh_cli::run_cli(std::env::args_os()));
}
