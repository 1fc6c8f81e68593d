use std::process::ExitCode;

use frameless_aoi::experiment::{parse_args, run, ArgsError};

fn main() -> ExitCode {
    let spec = match parse_args(std::env::args_os()) {
        Ok(spec) => spec,
        Err(ArgsError::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
        Err(ArgsError::Invalid(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_numerical() { 2 } else { 1 });
        }
    };
    match run(&spec) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            match report.passed {
                Some(false) => {
                    eprintln!("oracle check FAILED");
                    ExitCode::from(2)
                }
                Some(true) => {
                    println!("oracle check PASS");
                    ExitCode::SUCCESS
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
