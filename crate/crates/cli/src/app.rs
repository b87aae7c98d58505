//! Argument parsing and dispatch for the `nvctl` executable.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nvctl_core::geometry::CrystalCut;

use crate::commands;
use crate::config::{self, JobConfig};
use crate::error::CliError;
use crate::io::{sha256_hex, write_json, Manifest};

#[derive(Parser)]
#[command(name = "nvctl", version, about = "Zero-field control of NV-center ensembles")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Job configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides optimizer.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Lab→NV rotation matrices for one crystal cut.
    Rotations {
        /// 100, 110 or 111; defaults to crystal.cut of the config.
        #[arg(long)]
        cut: Option<String>,
    },
    /// Microstrip field map and the sub-ensemble partition at the focal point.
    Fields,
    /// GRAPE pulse optimization.
    Optimize,
    /// Propagate the ensemble through a pulse file.
    Simulate {
        #[arg(long)]
        pulse: Option<PathBuf>,
    },
    /// Dual-channel Rabi frequency versus channel-2 phase.
    RabiScan,
    /// π/2 – lock – π/2 sequence.
    Spinlock,
    /// Pseudo spin-1/2 Bloch trajectories for a pulse file.
    BlochExport {
        #[arg(long)]
        pulse: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rotations { .. } => "rotations",
            Command::Fields => "fields",
            Command::Optimize => "optimize",
            Command::Simulate { .. } => "simulate",
            Command::RabiScan => "rabi-scan",
            Command::Spinlock => "spinlock",
            Command::BlochExport { .. } => "bloch-export",
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<(JobConfig, Vec<u8>)>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{}: not UTF-8", path.display())))?;
    let cfg = config::parse(text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(Some((cfg, bytes)))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let loaded = load_config(cli.config.as_deref())?;
    let hash = loaded.as_ref().map(|(_, b)| sha256_hex(b));
    let mut cfg = loaded.map(|(c, _)| c);
    if let (Some(c), Some(seed)) = (cfg.as_mut(), cli.seed) {
        c.optimizer.seed = seed;
    }
    let need = |cfg: &Option<JobConfig>| -> Result<JobConfig, CliError> {
        cfg.clone().ok_or_else(|| CliError::Config("this subcommand needs --config".into()))
    };
    let config_dir = cli.config.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(cli.out.display().to_string(), e))?;
    let out = cli.out.as_path();
    let files = match &cli.command {
        Command::Rotations { cut } => {
            let cut = match (cut, &cfg) {
                (Some(s), _) => CrystalCut::parse(s).ok_or_else(|| CliError::Config(format!("--cut: unknown cut `{s}`")))?,
                (None, Some(c)) => c.cut()?,
                (None, None) => return Err(CliError::Config("rotations needs --cut or --config".into())),
            };
            commands::rotations(cut, out)?
        }
        Command::Fields => commands::fields(&need(&cfg)?, out)?,
        Command::Optimize => commands::optimize_cmd(&need(&cfg)?, out)?,
        Command::Simulate { pulse } => commands::simulate(&need(&cfg)?, &config_dir, pulse.as_deref(), out)?,
        Command::RabiScan => commands::rabi_scan_cmd(&need(&cfg)?, out)?,
        Command::Spinlock => commands::spinlock(&need(&cfg)?, out)?,
        Command::BlochExport { pulse } => commands::bloch_export(&need(&cfg)?, &config_dir, pulse.as_deref(), out)?,
    };
    let seed = match cli.command {
        Command::Optimize => cfg.as_ref().map(|c| c.optimizer.seed),
        _ => cli.seed,
    };
    let manifest = Manifest {
        tool: "nvctl",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        config_sha256: hash,
        seed,
        threads: rayon::current_num_threads(),
        outputs: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("run-manifest.json"), &manifest)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand. Help and
/// usage errors are reported as config errors carrying clap's text.
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run(cli)
}
