fn main() {
    std::process::exit(laneplan::cli::run(std::env::args_os()));
}
