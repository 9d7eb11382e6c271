fn main() {
    std::process::exit(cgdm_cli::run(std::env::args_os()));
}
