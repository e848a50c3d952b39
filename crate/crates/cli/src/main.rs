//! `spikekit` command-line front end.
//!
//! Every subcommand prints one JSON line on success. Failures print one JSON
//! line `{"error": <kind>, "message": <text>}` on stderr and exit with 2 for
//! usage errors or 1 for everything else.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use spikekit::codec::{self, SpikeFileHeader};
use spikekit::imageio;
use spikekit::niqe::{self, NiqeModel};
use spikekit::pipeline::{self, Clip, Precomputed, ReconRegistry};
use spikekit::recon;
use spikekit::sim::{self, SimConfig};

#[derive(Parser, Debug)]
#[command(
    name = "spikekit",
    version,
    about = "Spike camera simulation, reconstruction and quality tools"
)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object of flag defaults; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate-and-fire simulation of a directory of PNG frames.
    Simulate {
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        light_scale: f64,
        #[arg(long, default_value_t = 0.0)]
        dark_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hold each frame for this many spike frames.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconstruct an image from a spike file.
    Reconstruct {
        #[arg(long, value_enum)]
        method: Method,
        /// TFP exposure window in frames (defaults to the whole stream).
        #[arg(long)]
        window: Option<usize>,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Bin a spike file into a voxel tensor (`.vox` plus `.vox.json`).
    Voxelize {
        #[arg(long)]
        bins: usize,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit or apply a NIQE model.
    Niqe {
        #[command(subcommand)]
        action: NiqeAction,
    },
    /// Pick the lowest-NIQE reconstruction of one spike file.
    SelectHq {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        registry: RegistryArgs,
        /// Identifier used to look up precomputed images (defaults to the input file stem).
        #[arg(long)]
        clip_id: Option<String>,
    },
    /// Export spikes, voxels and HQ images for a labelled clip tree `DIR/<class>/*.spk`.
    BuildDataset {
        #[arg(long, value_name = "DIR")]
        clips: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[command(flatten)]
        registry: RegistryArgs,
    },
    /// Print header fields and spike statistics.
    Inspect {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Wrap a headerless `.dat` dump into a `.spk` file.
    ImportDat {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum NiqeAction {
    /// Fit a pristine model from a directory of PNG images.
    Fit {
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        #[arg(long, default_value_t = niqe::DEFAULT_PATCH_SIZE)]
        patch_size: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score one PNG image.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct RegistryArgs {
    /// TFP window for the `tfp` entry (defaults to the whole stream).
    #[arg(long)]
    tfp_window: Option<usize>,
    /// Extra method loading `DIR/<clip_id>.png`, as `NAME=DIR`. Repeatable.
    #[arg(long = "external", value_name = "NAME=DIR", value_parser = parse_external)]
    external: Vec<(String, PathBuf)>,
}

fn parse_external(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => {
            Ok((name.to_string(), PathBuf::from(dir)))
        }
        _ => Err(format!("expected NAME=DIR, got {s:?}")),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Tfp,
    Tfi,
}

/// Flag combination rejected after parsing; reported like a parse error.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn build_registry(args: &RegistryArgs, theta: f64) -> Result<ReconRegistry> {
    let mut registry = ReconRegistry::model_based(theta, args.tfp_window);
    for (name, dir) in &args.external {
        registry
            .register(name.clone(), Precomputed { dir: dir.clone() })
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(registry)
}

fn validate(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Reconstruct {
            method: Method::Tfi,
            window: Some(_),
            ..
        } => Err(usage("--window only applies to --method tfp")),
        Command::Simulate { repeat: 0, .. } => Err(usage("--repeat must be at least 1")),
        _ => Ok(()),
    }
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

/// Class directories sorted by name, `.spk` files sorted within each.
fn collect_clips(root: &Path) -> Result<Vec<Clip>> {
    let mut classes: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    let mut clips = Vec::new();
    for class_dir in classes {
        let label = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| anyhow!("non-UTF-8 class directory {}", class_dir.display()))?
            .to_string();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&class_dir)
            .with_context(|| format!("reading {}", class_dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "spk"))
            .collect();
        files.sort();
        for file in files {
            let (stream, theta) = codec::read_spk(&file)?;
            clips.push(Clip {
                class_label: label.clone(),
                stream,
                theta,
            });
        }
    }
    Ok(clips)
}

fn run(cli: Cli) -> Result<()> {
    validate(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }

    match cli.command {
        Command::Simulate {
            frames,
            theta,
            light_scale,
            dark_rate,
            seed,
            repeat,
            output,
        } => {
            let cfg = SimConfig {
                theta,
                light_scale,
                dark_rate,
                seed,
            };
            cfg.validate()?;
            let paths = imageio::list_pngs(&frames)?;
            let mut images = Vec::with_capacity(paths.len() * repeat);
            for p in &paths {
                let img = imageio::read_png(p)?;
                images.extend(std::iter::repeat_n(img, repeat));
            }
            let stream = sim::simulate(&images, &cfg)?;
            codec::write_spk(&output, &stream, theta)?;
            emit(json!({
                "command": "simulate",
                "output": output,
                "k": stream.k(), "h": stream.h(), "w": stream.w(),
                "spikes": stream.count_spikes(),
            }));
        }
        Command::Reconstruct {
            method,
            window,
            input,
            output,
        } => {
            let (stream, theta) = codec::read_spk(&input)?;
            let (name, img) = match method {
                Method::Tfp => (
                    "tfp",
                    recon::tfp(&stream, window.unwrap_or(stream.k()), theta)?,
                ),
                Method::Tfi => ("tfi", recon::tfi(&stream, theta)?),
            };
            imageio::write_png(&output, &img)?;
            emit(json!({
                "command": "reconstruct",
                "method": name,
                "output": output,
                "h": img.h(), "w": img.w(),
                "mean": img.mean(),
            }));
        }
        Command::Voxelize {
            bins,
            input,
            output,
        } => {
            let (stream, _) = codec::read_spk(&input)?;
            let grid = recon::voxelize(&stream, bins)?;
            grid.write(&output)?;
            emit(json!({
                "command": "voxelize",
                "output": output,
                "sidecar": recon::sidecar_path(&output),
                "c": grid.c(), "h": grid.h(), "w": grid.w(),
                "total": grid.total(),
            }));
        }
        Command::Niqe { action } => match action {
            NiqeAction::Fit {
                images,
                patch_size,
                output,
            } => {
                let corpus = imageio::list_pngs(&images)?
                    .iter()
                    .map(imageio::read_png)
                    .collect::<spikekit::Result<Vec<_>>>()?;
                let model = niqe::fit_niqe_model(&corpus, patch_size)?;
                model.save(&output)?;
                emit(json!({
                    "command": "niqe fit",
                    "output": output,
                    "images": corpus.len(),
                    "features": model.feature_len(),
                    "patch_size": model.patch_size,
                }));
            }
            NiqeAction::Score { model, input } => {
                let model = NiqeModel::load(&model)?;
                let img = imageio::read_png(&input)?;
                let score = niqe::niqe_score(&img, &model)?;
                emit(json!({"command": "niqe score", "input": input, "niqe": score}));
            }
        },
        Command::SelectHq {
            model,
            input,
            output,
            registry,
            clip_id,
        } => {
            let model = NiqeModel::load(&model)?;
            let (stream, theta) = codec::read_spk(&input)?;
            let registry = build_registry(&registry, theta)?;
            let clip_id = clip_id.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let sel = pipeline::select_hq(&clip_id, &stream, &registry, &model)?;
            imageio::write_png(&output, &sel.image)?;
            emit(json!({
                "command": "select-hq",
                "output": output,
                "chosen": sel.chosen,
                "scores": sel.scores,
            }));
        }
        Command::BuildDataset {
            clips,
            model,
            out,
            bins,
            registry,
        } => {
            let model = NiqeModel::load(&model)?;
            let clips = collect_clips(&clips)?;
            let theta = clips.first().map_or(1.0, |c| c.theta);
            if clips.iter().any(|c| c.theta != theta) {
                return Err(anyhow!(spikekit::Error::Parameter(
                    "clips disagree on threshold".into()
                )));
            }
            let registry = build_registry(&registry, theta)?;
            let manifest = pipeline::build_dataset(&clips, &registry, &model, bins, &out)?;
            emit(json!({
                "command": "build-dataset",
                "manifest": out.join(pipeline::MANIFEST_NAME),
                "items": manifest.items.len(),
            }));
        }
        Command::Inspect { input } => {
            let bytes =
                std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let header = SpikeFileHeader::parse(&bytes)?;
            let (stream, theta) = codec::decode(&bytes)?;
            let rate = stream.firing_rate();
            let (min, max) = rate
                .values()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            emit(json!({
                "command": "inspect",
                "version": header.version,
                "k": stream.k(), "h": stream.h(), "w": stream.w(),
                "theta": theta,
                "spikes": stream.count_spikes(),
                "mean_rate": rate.mean(),
                "min_rate": min,
                "max_rate": max,
            }));
        }
        Command::ImportDat {
            height,
            width,
            theta,
            input,
            output,
        } => {
            let bytes =
                std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let stream = codec::decode_raw(&bytes, height, width)?;
            codec::write_spk(&output, &stream, theta)?;
            emit(json!({
                "command": "import-dat",
                "output": output,
                "k": stream.k(), "h": stream.h(), "w": stream.w(),
            }));
        }
    }
    Ok(())
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::from(code)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| {
            e.downcast_ref::<spikekit::Error>()
                .map(spikekit::Error::kind)
        })
        .or_else(|| {
            err.chain()
                .find_map(|e| e.downcast_ref::<std::io::Error>().map(|_| "io"))
        })
        .unwrap_or("error")
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args().collect()) {
        Ok(args) => args,
        Err(config::ConfigError::Usage(msg)) => return fail("usage", &msg, 2),
        Err(config::ConfigError::Read(msg)) => return fail("io", &msg, 1),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid usage");
            let line = line.strip_prefix("error: ").unwrap_or(line);
            return fail("usage", line, 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => fail("usage", &e.to_string(), 2),
        Err(e) => fail(error_kind(&e), &format!("{e:#}"), 1),
    }
}
