fn main() {
    std::process::exit(lfcycle::cli::run(std::env::args_os()));
}
