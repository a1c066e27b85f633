fn main() {
    std::process::exit(nacns::harness::run_cli(std::env::args_os()));
}
