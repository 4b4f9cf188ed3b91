fn main() {
    std::process::exit(sebayes::cli::run(std::env::args_os()));
}
