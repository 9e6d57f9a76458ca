fn main() {
    std::process::exit(mwp_shaper::cli::run(std::env::args_os()));
}
