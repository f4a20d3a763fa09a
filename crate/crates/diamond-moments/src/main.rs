fn main() {
    let code = diamond_moments::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
