fn main() {
    let code = covten::cli::run(std::env::args().collect());
    std::process::exit(code);
}
