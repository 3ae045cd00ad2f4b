fn main() {
    std::process::exit(blipcdf::cli::run(std::env::args_os()));
}
