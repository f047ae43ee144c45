fn main() {
    std::process::exit(corrlab_cli::dispatch(std::env::args_os()));
}
