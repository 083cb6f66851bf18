fn main() {
    std::process::exit(diffimprove::cli::dispatch(std::env::args_os()));
}
