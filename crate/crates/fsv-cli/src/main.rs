fn main() {
    std::process::exit(fsv_cli::cli_main(std::env::args_os()));
}
