use std::process::ExitCode;

fn main() -> ExitCode {
    match colocate::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exitCode": e.exit_code(),
            });
            eprintln!("{detail}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
