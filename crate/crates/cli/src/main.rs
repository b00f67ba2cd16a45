fn main() {
    std::process::exit(lendsim_cli::run(std::env::args_os()));
}
