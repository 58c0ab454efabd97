fn main() {
    std::process::exit(gp_dhp::cli::run(std::env::args_os()));
}
