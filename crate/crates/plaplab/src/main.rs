use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use plaplab::cli;
use plaplab::config::{apply_overrides, build_config, parse_sections, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "plaplab",
    version,
    about = "Radial p-Laplacian laboratory: gradient-source vs order-zero problems on the unit ball"
)]
struct Args {
    /// transform | solve | eigen | branch | lambda-star | sweep | singular | predict
    subcommand: String,

    /// Problem/nonlinearity/numerics config file (INI-like sections).
    #[arg(long)]
    config: PathBuf,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "plaplab-out")]
    out: PathBuf,

    /// Override the radial grid size (numerics.grid).
    #[arg(long)]
    grid: Option<usize>,

    /// Repeatable section.key=value overrides.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_subcommand(name: &str) -> Option<Subcommand> {
    Some(match name {
        "transform" => Subcommand::Transform,
        "solve" => Subcommand::Solve,
        "eigen" => Subcommand::Eigen,
        "branch" => Subcommand::Branch,
        "lambda-star" => Subcommand::LambdaStar,
        "sweep" => Subcommand::Sweep,
        "singular" => Subcommand::Singular,
        "predict" => Subcommand::Predict,
        _ => return None,
    })
}

fn main() -> ExitCode {
    let args = Args::parse();

    if let Ok(threads) = std::env::var("PLAPLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    let Some(sub) = parse_subcommand(&args.subcommand) else {
        eprintln!(
            "unknown subcommand `{}`; expected one of transform, solve, eigen, branch, lambda-star, sweep, singular, predict",
            args.subcommand
        );
        return ExitCode::from(1);
    };

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };

    let result = (|| {
        let mut sections = parse_sections(&text)?;
        if let Some(grid) = args.grid {
            apply_overrides(&mut sections, &[format!("numerics.grid={grid}")])?;
        }
        apply_overrides(&mut sections, &args.overrides)?;
        let cfg = build_config(sub, sections)?;
        cli::run(&cfg, &args.out)
    })();

    match result {
        Ok(status) => {
            println!(
                "{} finished with status {status}; artifacts in {}",
                args.subcommand,
                args.out.display()
            );
            ExitCode::from(status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
