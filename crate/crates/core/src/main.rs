fn main() {
    std::process::exit(cglens::cli::run(std::env::args_os()));
}
