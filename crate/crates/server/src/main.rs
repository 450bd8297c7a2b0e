use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lineage_core::layout::{compute_layout, LayoutMode, LayoutOptions};
use lineage_core::selection::{build_comparison, SimplifyConfig};
use lineage_core::store::Encoding;
use lineage_core::{load_store, Exec, ModelStore};
use lineage_server::SessionConfig;
use lineage_sim::scenario::{emit_fixtures, Scenario};

#[derive(Parser)]
#[command(name = "lineage", version, about = "Compare trees of compressed models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load an experiment file and report the first violation.
    Validate { file: PathBuf },
    /// Print the model map layout as JSON.
    Layout {
        file: PathBuf,
        #[arg(long, default_value = "by_step")]
        mode: LayoutMode,
        #[arg(long)]
        color: Option<String>,
        #[arg(long)]
        size: Option<String>,
    },
    /// Print the comparison result for a selection as JSON.
    Compare {
        file: PathBuf,
        /// Comma-separated model ids.
        #[arg(long, value_delimiter = ',', required = true)]
        select: Vec<String>,
        #[arg(long)]
        metric: String,
    },
    /// Run a simulator scenario and write its fixtures.
    Sim {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run without the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Serve the /v1 API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn read_store(file: &Path) -> Result<ModelStore, String> {
    let text = fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    load_store(&text).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Validate { file } => {
            let store = read_store(&file)?;
            println!("ok: {} models, {} roots", store.len(), store.roots().len());
        }
        Command::Layout { file, mode, color, size } => {
            let store = read_store(&file)?;
            let color = color.or_else(|| store.default_metric(Encoding::Color).map(|m| m.name.clone()));
            let size = size.or_else(|| store.default_metric(Encoding::Size).map(|m| m.name.clone()));
            let layout = compute_layout(&store, mode, color.as_deref(), size.as_deref(), None, LayoutOptions::default())
                .map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string(&layout).expect("layout serializes"));
        }
        Command::Compare { file, select, metric } => {
            let store = read_store(&file)?;
            let ids: BTreeSet<String> = select.into_iter().collect();
            let result =
                build_comparison(&store, &ids, &metric, &SimplifyConfig::default()).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string(&result).expect("comparison serializes"));
        }
        Command::Sim {
            scenario,
            seed,
            out,
            sequential,
        } => {
            let exec = if sequential { Exec::Sequential } else { Exec::default() };
            let files = emit_fixtures(scenario, seed, &out, exec).map_err(|e| e.to_string())?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Serve { config, port } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let mut config = SessionConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(p) = port {
                config.port = p;
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(lineage_server::serve(&config)).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
