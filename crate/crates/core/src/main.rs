fn main() {
    std::process::exit(newtonlab::frontend::run_cli(std::env::args_os()));
}
