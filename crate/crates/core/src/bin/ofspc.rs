fn main() {
    std::process::exit(ofspc::cli::run(std::env::args_os()));
}
