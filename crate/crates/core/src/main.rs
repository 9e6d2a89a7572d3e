fn main() {
    std::process::exit(coral::cli::run(std::env::args_os()));
}
