use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kahler_core::config::{parse_config, RunConfig, Scenario};
use kahler_core::pipeline::{curvature_study, run_pipeline, RunOutput};
use kahler_core::report::{emit_report, summary_text};
use kahler_core::Result;

#[derive(Parser)]
#[command(name = "kahlerbench", version, about = "Batch runner for the Kahler geometry workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in the config.
    Run(Common),
    /// Run the operator probes (config optional).
    Probe(Common),
    /// Curvature refinement study over a list of resolutions.
    Study(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flow the input metric briefly before the Einstein solve.
    #[arg(long)]
    smooth_first: bool,
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
}

fn load(common: &Common, fallback: Option<Scenario>) -> Result<RunConfig> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| kahler_core::Error::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            parse_config(&text)?
        }
        (None, Some(s)) => RunConfig::defaults(s),
        (None, None) => {
            return Err(kahler_core::Error::Config(vec!["run needs --config <path>".into()]));
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.smooth_first {
        cfg.smooth_first = true;
    }
    if let Some(r) = &common.resolutions {
        cfg.resolutions = r.clone();
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.display().to_string());
    }
    // overrides go through the same validation as the file
    parse_config(&cfg.to_json())
}

fn execute(cli: Cli) -> Result<RunOutput> {
    let (output, cfg) = match cli.command {
        Command::Run(c) => {
            let cfg = load(&c, None)?;
            (run_pipeline(&cfg), cfg)
        }
        Command::Probe(c) => {
            let mut cfg = load(&c, Some(Scenario::OperatorProbes))?;
            cfg.scenario = Scenario::OperatorProbes;
            (run_pipeline(&cfg), cfg)
        }
        Command::Study(c) => {
            let cfg = load(&c, Some(Scenario::TorusMA))?;
            (curvature_study(&cfg), cfg)
        }
    };
    let dir = PathBuf::from(cfg.out.clone().unwrap_or_else(|| "kahlerbench-out".into()));
    emit_report(&output, &dir)?;
    Ok(output)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(output) => {
            print!("{}", summary_text(&output));
            if output.manifest.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("kahlerbench: {e}");
            ExitCode::from(2)
        }
    }
}
