fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEDVERIFY_LOG", "warn")).init();
    std::process::exit(medverify_cli::run(std::env::args_os()));
}
