use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use vpconvex_cli::appendix::{self, AppendixParams};
use vpconvex_cli::commands::DEFAULT_OUT_DIR;
use vpconvex_cli::{classify, run_file, RunOptions};

#[derive(Parser)]
#[command(name = "vpconvex", version, about = "Vlasov-Poisson characteristics and field solvers in convex domains")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a JSON configuration.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Regenerate the appendix data sets.
    ReproduceAppendix {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: bool,
    },
}

fn dispatch(cmd: Cmd) -> Result<serde_json::Value> {
    match cmd {
        Cmd::Run { config, out, plots, seed } => {
            let summary = run_file(&config, &RunOptions { out, plots, seed })?;
            Ok(serde_json::to_value(summary)?)
        }
        Cmd::ReproduceAppendix { out, plots } => {
            let out = out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            let (summary, artifacts) = appendix::reproduce(&out, plots, &AppendixParams::default())?;
            Ok(serde_json::json!({
                "command": "reproduce_appendix",
                "out_dir": out,
                "artifacts": artifacts,
                "fig2_field_driven_vx_sign_changes": summary.fig2.field_driven_vx_sign_changes,
                "family_alpha0_decreasing": summary.family_alpha0_decreasing(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (kind, body) = classify(&err);
            println!("{body}");
            ExitCode::from(kind.code() as u8)
        }
    }
}
