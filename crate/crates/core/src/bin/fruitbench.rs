fn main() {
    std::process::exit(fruitbench::cli::run(std::env::args_os()));
}
