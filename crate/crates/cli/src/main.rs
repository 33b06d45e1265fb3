mod config;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match config::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = cli.resolve().and_then(|s| {
        let out = run::run(&s)?;
        println!("wrote {} ({} rows); {}", s.output.display(), out.rows, out.summary);
        Ok(out)
    });
    match result {
        Ok(out) if out.blow_up.is_some() => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
