fn main() {
    std::process::exit(mtdistill_cli::run_command(std::env::args_os()));
}
