use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("COMPLYSCAN_LOG", "warn")).init();
    let code = complyscan::run(
        std::env::args_os(),
        &|k| std::env::var(k).ok(),
        &mut io::stdout(),
        &mut io::stderr(),
    );
    ExitCode::from(code as u8)
}
