fn main() {
    let default_level = match std::env::args().nth(1).as_deref() {
        Some("mock-serve") => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .target(env_logger::Target::Stderr)
        .init();
    std::process::exit(groundcue::cli::run(std::env::args_os()));
}
