fn main() {
    std::process::exit(weakmix::cli::main_with_args(std::env::args()));
}
