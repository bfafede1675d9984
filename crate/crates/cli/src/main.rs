fn main() {
    std::process::exit(fhn_funnel_cli::cli_dispatch(std::env::args_os()));
}
