fn main() {
    std::process::exit(markov_functionals::cli::run(std::env::args_os()));
}
