fn main() {
    std::process::exit(maser_core::cli::run(std::env::args_os()));
}
