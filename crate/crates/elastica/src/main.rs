use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use elastica_np::cli::{resolve_threads, run_config, Config, Kind};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Spectrum,
    Solve,
    Converge,
    Gap,
}

/// Boundary-integral experiments for 2D high-contrast elastic inclusions.
#[derive(Debug, Parser)]
#[command(name = "elastica-np", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long, env = "ELASTICA_NP_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let kind = match args.command {
        Command::Spectrum => Kind::Spectrum,
        Command::Solve => Kind::Solve,
        Command::Converge => Kind::Converge,
        Command::Gap => Kind::Gap,
    };
    let result = Config::from_path(&args.config).and_then(|cfg| {
        let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        run_config(kind, &cfg, &out, resolve_threads(args.threads))
    });
    match result {
        Ok(out) => {
            for f in out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("elastica-np: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
