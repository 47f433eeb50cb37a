mod args;
mod commands;
mod inputs;
mod report;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::Cli;

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("LIFTLAB_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or(format!("LIFTLAB_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("liftlab: {e}");
        return ExitCode::from(2);
    }
    let echo: Vec<String> = std::env::args().skip(1).collect();
    let start = Instant::now();
    let outcome = match commands::run(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("liftlab {}: {e}", cli.command.name());
            return ExitCode::from(2);
        }
    };
    let seconds = cli.timing.then(|| start.elapsed().as_secs_f64());
    let report = report::envelope(&echo, &outcome, seconds);
    let bytes = report::emit(&report, &outcome, cli.format);
    let written = match &cli.output {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("liftlab: {e}");
        return ExitCode::from(2);
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
