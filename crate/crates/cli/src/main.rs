fn main() {
    std::process::exit(dfcv_cli::cli_main(std::env::args_os()));
}
