//! Command-line front end for the localization simulator.

pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use simloc_core::geometry::{grid_tile_rect, jacobian_det, project_road, RoadPoint};
use simloc_core::noise::{gip1d_weights, gip2d_weights, ssnr, NoiseProfile};
use simloc_core::sim::{sweep_alpha, sweep_noise};
use thiserror::Error;

use config::{read_config_file, ConfigError, Entry, Preset, Settings, SweepKind, SEED_ENV};
use output::{curve_csv, fmt_sig12, write_with_manifest, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "simloc", version, about = "Monte Carlo simulator for tile-matching localization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Error rates against sensor noise level (fig6, fig8).
    SweepNoise(SweepArgs),
    /// Error rates against AR(1) correlation (fig7, fig9).
    SweepAlpha(SweepArgs),
    /// Per-tile focal-plane areas, sensor variances, SSNR and matcher weights.
    TileAreas(TileArgs),
    /// Project one road point onto the focal plane.
    Project(ProjectArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Config file with `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set h_cm=55`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    pub n0: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Comma-separated, e.g. `SIP,GIP2D`.
    #[arg(long)]
    pub algorithms: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sinr_db: Option<String>,
    #[arg(long)]
    pub quantize_ip: bool,
    /// Output CSV; a `.manifest.json` sidecar is written next to it. Stdout if omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct TileArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub n0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sinr_db: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub xbar: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub ybar: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<simloc_core::Error> for CliError {
    fn from(e: simloc_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("I/O error: {e}"))
    }
}

fn flag_entries(cfg: &ConfigArgs, flags: &[(&str, &Option<String>)]) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for s in &cfg.set {
        let Some((k, v)) = s.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin: "--set".to_string(),
                line: 1,
                text: s.clone(),
            });
        };
        out.push(Entry::new("--set", k.trim(), v.trim()));
    }
    for (key, value) in flags {
        if let Some(v) = value {
            out.push(Entry::new(format!("--{}", key.replace('_', "-")), *key, v.clone()));
        }
    }
    Ok(out)
}

/// Resolves settings from the environment seed, the config file and the flags.
fn settings(cfg: &ConfigArgs, flags: &[(&str, &Option<String>)]) -> Result<Settings, ConfigError> {
    let file = match &cfg.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    Settings::layered(env_seed.as_deref(), &file, &flag_entries(cfg, flags)?)
}

fn emit(out: Option<&PathBuf>, text: &str, manifest: impl FnOnce(&PathBuf) -> RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => write_with_manifest(path, text, &manifest(path))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            std::io::Write::write_all(&mut stdout, text.as_bytes())?;
        }
    }
    Ok(())
}

fn run_sweep(kind: SweepKind, args: &SweepArgs) -> Result<(), CliError> {
    let quantize = args.quantize_ip.then(|| "true".to_string());
    let s = settings(
        &args.cfg,
        &[
            ("seed", &args.seed),
            ("trials", &args.trials),
            ("n0", &args.n0),
            ("alpha", &args.alpha),
            ("algorithms", &args.algorithms),
            ("sinr_db", &args.sinr_db),
            ("quantize_ip", &quantize),
        ],
    )?;
    let preset = args.preset.unwrap_or(kind.default_preset());
    let cfg = s.sim_config(kind, preset)?;
    let points = match kind {
        SweepKind::Noise => sweep_noise(&cfg)?,
        SweepKind::Alpha => sweep_alpha(&cfg)?,
    };
    let csv = curve_csv(&points, cfg.seed);
    emit(args.out.as_ref(), &csv, |p| RunManifest::new(kind.command(), Some(preset), p, &cfg))
}

fn run_tile_areas(args: &TileArgs) -> Result<(), CliError> {
    let s = settings(&args.cfg, &[("n0", &args.n0), ("sinr_db", &args.sinr_db)])?;
    let rig = s.rig()?;
    let grid = s.grid()?;
    let n0 = match s.n0.as_deref() {
        None => 2.5e-5,
        Some([v]) => *v,
        Some(v) => {
            return Err(ConfigError::OutOfRange {
                origin: "tile-areas".to_string(),
                key: "n0".to_string(),
                reason: format!("expected a single value, got {}", v.len()),
            }
            .into())
        }
    };
    let sigma2 = s.sigma_a() * s.sigma_a();
    let profile = NoiseProfile::build(&rig, &grid, n0, s.sigma_i2_for(&[]))?;
    let w1 = gip1d_weights(&profile).ok();
    let w2 = gip2d_weights(&profile).ok();
    let mut text = String::from("k,j,y_lower_cm,y_upper_cm,area_cm2,sigma_s2,ssnr,w_gip1d,w_gip2d\n");
    for k in 0..grid.n_w() {
        for j in 0..grid.n_d() {
            let r = grid_tile_rect(&grid, k, j);
            let w = |m: &Option<simloc_core::noise::WeightMatrix>| {
                fmt_sig12(m.as_ref().map_or(f64::INFINITY, |m| m.values()[[k, j]]))
            };
            text.push_str(&format!(
                "{k},{j},{},{},{},{},{},{},{}\n",
                fmt_sig12(r.y_lower),
                fmt_sig12(r.y_upper),
                fmt_sig12(profile.areas()[[k, j]]),
                fmt_sig12(profile.sigma_s2()[[k, j]]),
                fmt_sig12(ssnr(&profile, sigma2, k, j)),
                w(&w1),
                w(&w2),
            ));
        }
    }
    match &args.out {
        Some(path) => output::write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_project(args: &ProjectArgs) -> Result<(), CliError> {
    let s = settings(&args.cfg, &[])?;
    let rig = s.rig()?;
    let p = RoadPoint::new(args.xbar, args.ybar).map_err(|e| ConfigError::OutOfRange {
        origin: "--ybar".to_string(),
        key: "ybar".to_string(),
        reason: e.to_string(),
    })?;
    let q = project_road(p, &rig);
    println!("x_tilde,y_tilde,jacobian_det");
    println!(
        "{},{},{}",
        fmt_sig12(q.x_tilde),
        fmt_sig12(q.y_tilde),
        fmt_sig12(jacobian_det(args.ybar, &rig))
    );
    Ok(())
}

/// Parses an argument list (program name first) and runs it.
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Runtime(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::SweepNoise(a) => run_sweep(SweepKind::Noise, a),
        Command::SweepAlpha(a) => run_sweep(SweepKind::Alpha, a),
        Command::TileAreas(a) => run_tile_areas(a),
        Command::Project(a) => run_project(a),
    }
}
