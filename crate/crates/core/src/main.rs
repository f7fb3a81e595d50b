use std::process::ExitCode;

fn main() -> ExitCode {
    match multimask::cli::run_from(std::env::args_os()) {
        Ok(Some(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", multimask::cli::format_error(&e));
            ExitCode::FAILURE
        }
    }
}
