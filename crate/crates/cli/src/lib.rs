//! Command-line frontend: argument parsing, the segment/otsu pipelines and
//! the run summary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use twophase_core::imgio::{read_image, write_energy_csv, write_field, write_mask};
use twophase_core::synthetic::{make_synthetic, SyntheticKind};
use twophase_core::{otsu_segment, otsu_threshold, segment_with_observer, Mask, ScalarField, SolverParams, WeightParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker thread count (0 = automatic).
pub const THREADS_ENV: &str = "TWOPHASE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "twophase", version, about = "Two-phase image segmentation with split Bregman iterations")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimise the weighted-TV two-phase energy.
    Segment(SegmentArgs),
    /// Threshold at Otsu's automatic level.
    Otsu(InputArgs),
}

#[derive(Debug, Clone, Args)]
struct InputArgs {
    /// Input image (PGM or PNG). Not needed with --synthetic.
    #[arg(required_unless_present = "synthetic")]
    input: Option<PathBuf>,

    /// Output mask path; `.pgm` writes PGM, anything else PNG.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,

    #[arg(long, value_enum, default_value_t = SummaryFormat::Text)]
    summary: SummaryFormat,

    /// Generate a seeded test image instead of reading one.
    #[arg(long, value_parser = parse_kind, conflicts_with = "input")]
    synthetic: Option<SyntheticKind>,

    /// Side length of the synthetic image.
    #[arg(long, default_value_t = 128)]
    size: usize,

    /// Gaussian noise standard deviation of the synthetic image.
    #[arg(long, default_value_t = 0.05, value_parser = non_negative, allow_negative_numbers = true)]
    noise: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct SegmentArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, default_value_t = 1.0, value_parser = positive, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1, value_parser = positive, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, default_value_t = 0.01, value_parser = positive, allow_negative_numbers = true)]
    tau: f64,
    /// Number of past energies in the stopping average.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    avg_window: u64,
    #[arg(long, default_value_t = 1e-4, value_parser = positive, allow_negative_numbers = true)]
    tol: f64,
    #[arg(long, default_value_t = 2.0, value_parser = positive, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1, value_parser = positive, allow_negative_numbers = true)]
    rho: f64,
    /// Use g = 1 instead of the edge-stopping weight.
    #[arg(long)]
    uniform_weight: bool,
    #[arg(long, default_value_t = 0.5, value_parser = unit_open, allow_negative_numbers = true)]
    threshold: f64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    /// Write a thresholded mask every N iterations (0 = off).
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    #[arg(long)]
    energy_csv: Option<PathBuf>,
    /// Write the final relaxed indicator as a 16-bit PNG.
    #[arg(long)]
    u_field: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<SyntheticKind, String> {
    s.parse()
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {v}"))
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie strictly between 0 and 1, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Segment,
    Otsu,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageInput {
    File(PathBuf),
    Synthetic {
        kind: SyntheticKind,
        size: usize,
        noise_std: f64,
        seed: u64,
    },
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input: ImageInput,
    pub output_mask_path: PathBuf,
    pub energy_csv_path: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    pub snapshot_every: usize,
    pub u_field_path: Option<PathBuf>,
    pub solver: SolverParams,
    pub summary_format: SummaryFormat,
}

impl InputArgs {
    fn image_input(&self) -> ImageInput {
        match (&self.synthetic, &self.input) {
            (Some(kind), _) => ImageInput::Synthetic {
                kind: *kind,
                size: self.size,
                noise_std: self.noise,
                seed: self.seed,
            },
            (None, Some(path)) => ImageInput::File(path.clone()),
            (None, None) => unreachable!("clap enforces an input"),
        }
    }
}

/// Parses `argv` (including the program name). Errors carry clap's usage
/// text and exit with [`EXIT_USAGE`]; `--help`/`--version` exit with 0.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let config = match cli.command {
        Command::Otsu(input) => RunConfig {
            command: CommandKind::Otsu,
            input: input.image_input(),
            output_mask_path: input.output,
            energy_csv_path: None,
            snapshot_dir: None,
            snapshot_every: 0,
            u_field_path: None,
            solver: SolverParams::default(),
            summary_format: input.summary,
        },
        Command::Segment(args) => {
            if args.snapshot_every > 0 && args.snapshot_dir.is_none() {
                return Err(Cli::command().error(
                    ErrorKind::MissingRequiredArgument,
                    "--snapshot-every > 0 requires --snapshot-dir",
                ));
            }
            RunConfig {
                command: CommandKind::Segment,
                input: args.input.image_input(),
                output_mask_path: args.input.output.clone(),
                energy_csv_path: args.energy_csv,
                snapshot_dir: args.snapshot_dir,
                snapshot_every: args.snapshot_every,
                u_field_path: args.u_field,
                solver: SolverParams {
                    lambda: args.lambda,
                    gamma: args.gamma,
                    tau: args.tau,
                    avg_window: args.avg_window as usize,
                    tol: args.tol,
                    max_iters: args.max_iters as usize,
                    snapshot_every: args.snapshot_every,
                    threshold: args.threshold,
                    weight: WeightParams {
                        sigma: args.sigma,
                        rho: args.rho,
                        uniform: args.uniform_weight,
                    },
                },
                summary_format: args.input.summary,
            }
        }
    };
    Ok(config)
}

/// Quantities reported after a run.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: CommandKind,
    pub width: usize,
    pub height: usize,
    pub foreground_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub elapsed_seconds: f64,
}

impl Summary {
    pub fn render(&self, format: SummaryFormat) -> String {
        match format {
            SummaryFormat::Json => serde_json::to_string(self).expect("summary serialises"),
            SummaryFormat::Text => {
                let mut lines = vec![
                    format!("command:       {}", match self.command {
                        CommandKind::Segment => "segment",
                        CommandKind::Otsu => "otsu",
                    }),
                    format!("size:          {}x{}", self.width, self.height),
                    format!("foreground:    {} px", self.foreground_pixels),
                ];
                if let Some(t) = self.threshold {
                    lines.push(format!("threshold:     {t:.6}"));
                }
                if let Some(it) = self.iterations {
                    lines.push(format!("iterations:    {it}"));
                }
                if let Some(r) = &self.stop_reason {
                    lines.push(format!("stop reason:   {r}"));
                }
                if let (Some(c1), Some(c2)) = (self.c1, self.c2) {
                    lines.push(format!("c1, c2:        {c1:.6}, {c2:.6}"));
                }
                if let Some(e) = self.final_energy {
                    lines.push(format!("final energy:  {e:.6}"));
                }
                lines.push(format!("elapsed:       {:.3} s", self.elapsed_seconds));
                lines.join("\n")
            }
        }
    }
}

pub fn load_input(input: &ImageInput) -> anyhow::Result<ScalarField> {
    match input {
        ImageInput::File(path) => read_image(path).with_context(|| format!("reading {}", path.display())),
        ImageInput::Synthetic {
            kind,
            size,
            noise_std,
            seed,
        } => Ok(make_synthetic(*kind, *size, *noise_std, *seed)?.image),
    }
}

fn snapshot_path(dir: &Path, iter: usize) -> PathBuf {
    dir.join(format!("iter_{iter}.png"))
}

/// Runs the configured pipeline and writes every requested artifact.
pub fn execute(config: &RunConfig) -> anyhow::Result<Summary> {
    let image = load_input(&config.input)?;
    let (width, height) = image.shape();

    match config.command {
        CommandKind::Otsu => {
            let start = std::time::Instant::now();
            let threshold = otsu_threshold(&image).context("Otsu thresholding")?;
            let mask = otsu_segment(&image)?;
            let elapsed_seconds = start.elapsed().as_secs_f64();
            write_mask(&mask, &config.output_mask_path)
                .with_context(|| format!("writing {}", config.output_mask_path.display()))?;
            Ok(Summary {
                command: CommandKind::Otsu,
                width,
                height,
                foreground_pixels: mask.foreground_count(),
                iterations: None,
                stop_reason: None,
                c1: None,
                c2: None,
                final_energy: None,
                threshold: Some(threshold),
                elapsed_seconds,
            })
        }
        CommandKind::Segment => {
            if let Some(dir) = &config.snapshot_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let mut snapshot_error: Option<anyhow::Error> = None;
            let result = segment_with_observer(&image, &config.solver, |snap| {
                if snapshot_error.is_some() {
                    return;
                }
                if let Some(dir) = &config.snapshot_dir {
                    let path = snapshot_path(dir, snap.iter);
                    if let Err(e) = write_mask(&Mask::threshold(snap.u, snap.threshold), &path) {
                        snapshot_error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display())));
                    }
                }
            })?;
            if let Some(e) = snapshot_error {
                return Err(e);
            }
            if result.degenerate {
                bail!("input image is constant; there is nothing to segment");
            }
            write_mask(&result.mask, &config.output_mask_path)
                .with_context(|| format!("writing {}", config.output_mask_path.display()))?;
            if let Some(path) = &config.energy_csv_path {
                write_energy_csv(&result.energy_trace, path).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = &config.u_field_path {
                write_field(&result.u_final, path).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(Summary {
                command: CommandKind::Segment,
                width,
                height,
                foreground_pixels: result.mask.foreground_count(),
                iterations: Some(result.iterations),
                stop_reason: Some(result.stop_reason.to_string()),
                c1: Some(result.c1),
                c2: Some(result.c2),
                final_energy: result.energy_trace.last().copied(),
                threshold: None,
                elapsed_seconds: result.elapsed_seconds,
            })
        }
    }
}

/// Runs `config`, printing the summary to stdout and failures to stderr.
/// Returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(summary) => {
            println!("{}", summary.render(config.summary_format));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// Worker thread cap from [`THREADS_ENV`]; `None` means automatic.
pub fn thread_cap(value: Option<&str>) -> anyhow::Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => bail!("{THREADS_ENV} must be a non-negative integer, got `{v}`"),
        },
    }
}
