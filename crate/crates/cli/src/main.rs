use std::fs;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mutable_core::calibration::{CalibrationProfile, DEFAULT_SAFETY};
use mutable_core::instrument::DrumLayout;
use mutable_core::pipeline::{run, PipelineConfig};
use mutable_core::trace::{generate, replay, write_trace, ScenarioSpec};
use mutable_core::training::{calibrate_profile, load_training_dir, write_synthetic_training};
use mutable_core::{scenarios, PayloadMode, Policy};

const CONFIG_ENV: &str = "MUTABLE_CONFIG";

#[derive(Parser)]
#[command(name = "mutable", version, about = "Surface drum pipeline: traces, replay, calibration, live server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Continuous,
    Adaptive,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Continuous => Policy::Continuous,
            PolicyArg::Adaptive => Policy::Adaptive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Hard taps on drum 2, hand still
    SameSpot,
    /// Hard taps cycling over all drums
    Moving,
    /// 44 detectable and 9 sub-threshold soft taps
    Soft,
}

fn parse_payload(s: &str) -> Result<PayloadMode, String> {
    match s {
        "24" | "binary" => Ok(PayloadMode::Binary),
        "62" | "raw" => Ok(PayloadMode::Raw),
        _ => Err(format!("payload must be 24 or 62, got {s}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic JSONL trace.
    GenTrace {
        /// Scenario spec JSON
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Tap count for presets
        #[arg(long, default_value_t = 20)]
        taps: usize,
        /// Overrides the spec's seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace through the pipeline.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Calibration profile replacing the config's
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        wav: Option<PathBuf>,
        /// Per-tap latency CSV
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long, value_parser = parse_payload)]
        payload: Option<PayloadMode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learn a calibration profile from a training directory.
    Calibrate {
        #[arg(long)]
        training: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAFETY)]
        safety: f64,
    },
    /// Write a synthetic training directory.
    GenTraining {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        taps: usize,
        /// Z dip of each training tap, g
        #[arg(long, default_value_t = 0.85)]
        dip: f64,
        #[arg(long, default_value_t = 1.5)]
        surface_depth: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Latency statistics for one policy and payload size.
    Bench {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long, value_parser = parse_payload)]
        payload: PayloadMode,
        #[arg(long, default_value_t = 1000)]
        taps: usize,
        /// Cycle the hand over all drums instead of one spot
        #[arg(long)]
        moving: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the live-play server.
    Serve {
        /// Pipeline config; MUTABLE_CONFIG, when set, takes precedence
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PipelineConfig::from_json(&text).with_context(|| format!("loading {}", p.display()))
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::GenTrace { spec, preset, taps, seed, layout, out } => {
            let layout = match layout {
                Some(p) => DrumLayout::from_json_file(&p)?,
                None => DrumLayout::default(),
            };
            let mut spec: ScenarioSpec = match (spec, preset) {
                (Some(p), _) => read_json(&p)?,
                (None, Some(Preset::SameSpot)) => scenarios::same_spot(taps, 2, 0.7, 0),
                (None, Some(Preset::Moving)) => scenarios::moving(taps, &layout, 0.7, 0),
                (None, Some(Preset::Soft)) => scenarios::soft_taps(44, 9, 0),
                (None, None) => bail!("pass --spec or --preset"),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let trace = generate(&spec, &layout)?;
            write_trace(&trace.records, create(&out)?)?;
            eprintln!("wrote {} records, {} taps to {}", trace.records.len(), trace.taps.len(), out.display());
        }
        Command::Replay { trace, config, profile, report, wav, csv, policy, payload, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(p) = profile {
                cfg.profile = read_json::<CalibrationProfile>(&p)?;
            }
            if let Some(p) = policy {
                cfg.policy = p.into();
            }
            if let Some(p) = payload {
                cfg.payload = p;
            }
            let r = replay(&trace, &cfg, seed, wav.as_deref())?;
            fs::write(&report, r.to_json()).with_context(|| format!("writing {}", report.display()))?;
            if let Some(c) = csv {
                r.write_latency_csv(create(&c)?)?;
            }
            eprintln!(
                "{} taps detected, {} hits, {} drops, mean total {:.2} ms",
                r.taps_detected,
                r.hits.len(),
                r.drops.len(),
                r.latency.total.mean
            );
        }
        Command::Calibrate { training, out, safety } => {
            let set = load_training_dir(&training)?;
            let profile = calibrate_profile(&set, safety)?;
            write_json(&out, &profile)?;
            eprintln!(
                "threshold {:.4} g from {} taps, surface depth {:.3} m",
                profile.tap_threshold,
                set.streams.len(),
                profile.surface_depth_m
            );
        }
        Command::GenTraining { out, taps, dip, surface_depth, seed } => {
            write_synthetic_training(&out, taps, dip, surface_depth, seed)?;
            eprintln!("wrote {taps} training taps to {}", out.display());
        }
        Command::Bench { policy, payload, taps, moving, config, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.policy = policy.into();
            cfg.payload = payload;
            let spec = if moving {
                scenarios::moving(taps, &cfg.layout, 0.7, seed)
            } else {
                scenarios::same_spot(taps, 2, 0.7, seed)
            };
            let trace = generate(&spec, &cfg.layout)?;
            let start = Instant::now();
            let r = run(&trace.records, &cfg, seed)?;
            let elapsed = start.elapsed();
            let out = serde_json::json!({
                "policy": cfg.policy,
                "payload_bytes": payload.size(),
                "taps": r.taps_detected,
                "hits": r.hits.len(),
                "latency": r.latency,
                "run_ms": elapsed.as_secs_f64() * 1000.0,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Serve { config, addr, seed } => {
            let path = std::env::var_os(CONFIG_ENV).map(PathBuf::from).or(config);
            let cfg = load_config(path.as_deref())?;
            let state = mutable_service::AppState::new(cfg, seed)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let (local, server) = mutable_service::bind(addr, state).await?;
                eprintln!("listening on http://{local} (socket at ws://{local}/play)");
                server.await
            })?;
        }
    }
    Ok(())
}
