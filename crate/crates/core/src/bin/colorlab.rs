fn main() {
    std::process::exit(radial_ot::colorlab::cli::run(std::env::args_os()));
}
