fn main() {
    std::process::exit(nrdicke_cli::run(std::env::args().collect()));
}
