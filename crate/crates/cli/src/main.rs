use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(dmgdet_cli::LOG_ENV, "warn")).init();
    dmgdet_cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
