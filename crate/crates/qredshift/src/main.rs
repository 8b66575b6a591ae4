fn main() {
    std::process::exit(qredshift::cli::dispatch(std::env::args_os()));
}
