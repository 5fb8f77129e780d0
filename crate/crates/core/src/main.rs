fn main() {
    env_logger::init();
    std::process::exit(stockchain::cli::run(std::env::args_os()));
}
