fn main() {
    std::process::exit(kgchat_cli::run(std::env::args_os().collect()));
}
