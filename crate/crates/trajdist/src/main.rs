fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = trajdist::harness::cli::cli_main(std::env::args());
    std::process::exit(code);
}
