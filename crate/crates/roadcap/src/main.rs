use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roadcap::config::{load_config, RunConfig};
use roadcap::mesh_preset_arg;
use roadcap::pipeline::{run_pipeline, RunOptions, Stage};
use roadcap_core::mesh::MeshPreset;

#[derive(Parser)]
#[command(name = "roadcap", version, about = "Roadside air-quality capacity of a road section")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration. Without it the bundled scenario defaults apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_parser = mesh_preset_arg)]
    preset: Option<MeshPreset>,
    /// Merge parallel partial results in a fixed order.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Emission inventory and road source.
    Emit(Common),
    /// Mesh summary and cell-centre VTK.
    Mesh(Common),
    /// Flow field (runs emit and mesh first).
    Solve(Common),
    /// Species fields and monitor samples.
    Disperse(Common),
    /// Capacity report.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Use an existing monitor CSV instead of running the forward stages.
        #[arg(long)]
        monitors: Option<PathBuf>,
    },
    /// Calibration against field measurements.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        monitors: Option<PathBuf>,
        /// Field CSV `pollutant,distance_m,field_value,unit`.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Every stage in order.
    Pipeline(Common),
}

fn config(c: &Common) -> roadcap::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => load_config(path)?,
        None => RunConfig::new("g30"),
    };
    if let Some(p) = c.preset {
        cfg.mesh.preset = p;
    }
    if c.deterministic {
        cfg.deterministic = true;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, opts) = match cli.command {
        Command::Emit(c) => (c, RunOptions { until: Some(Stage::Emit), ..Default::default() }),
        Command::Mesh(c) => (c, RunOptions { until: Some(Stage::Mesh), ..Default::default() }),
        Command::Solve(c) => (c, RunOptions { until: Some(Stage::Solve), ..Default::default() }),
        Command::Disperse(c) => (c, RunOptions { until: Some(Stage::Disperse), ..Default::default() }),
        Command::Capacity { common, monitors } => {
            (common, RunOptions { until: Some(Stage::Capacity), monitors_csv: monitors, ..Default::default() })
        }
        Command::Calibrate { common, monitors, field } => {
            (common, RunOptions { until: Some(Stage::Calibrate), monitors_csv: monitors, field_csv: field })
        }
        Command::Pipeline(c) => (c, RunOptions::default()),
    };
    let cfg = match config(&common) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let run = run_pipeline(&cfg, &common.out_dir, &opts);
    ExitCode::from(run.exit_code())
}
