fn main() {
    std::process::exit(vsp_cli::run(std::env::args_os()));
}
