use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    ExitCode::from(hinf_detect_cli::run_cli(&argv) as u8)
}
