fn main() {
    std::process::exit(ldri::cli::run(std::env::args_os()));
}
