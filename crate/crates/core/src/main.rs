fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(pathway_rl::cli::run_command(&args));
}
