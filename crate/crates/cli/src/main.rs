fn main() {
    std::process::exit(qprobe_cli::run(std::env::args_os()));
}
