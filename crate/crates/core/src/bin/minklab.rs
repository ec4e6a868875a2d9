fn main() {
    std::process::exit(minklab::cli::run(std::env::args_os()));
}
