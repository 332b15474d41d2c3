fn main() {
    std::process::exit(sdc_cli::main_with_args(std::env::args_os()));
}
