use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jndattack::harness::{
    emit_report, load_dataset_with, quantize_into_box, run_campaign, write_synthetic_corpus, CampaignConfig,
    CampaignReport, DonorSource, OracleSpec, ReportFormat,
};
use jndattack::imageops::{load_png, save_png};
use jndattack::jnd::{jnd_box, jnd_threshold_with};
use jndattack::metrics::{psnr, ssim};
use jndattack::{run_attack, Error, Gamma, OracleHandle, TextureBank};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jndattack", version, about = "Black-box score attacks on no-reference image quality models")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack a single PNG.
    Attack {
        image: PathBuf,
        /// Where to write the adversarial PNG.
        #[arg(short, long, default_value = "adv.png")]
        out: PathBuf,
        /// Also write the step trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Attack every image listed in a `path,mos` CSV and write reports.
    Campaign {
        /// Directory holding the images.
        #[arg(long)]
        data: PathBuf,
        /// MOS file; defaults to `<data>/mos.csv`.
        #[arg(long)]
        mos: Option<PathBuf>,
        /// Output directory; defaults to the config's or `jndattack-out`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Print oracle scores for PNG files, one per line.
    Score {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Re-render a saved `report.json`.
    Report {
        report: PathBuf,
        #[arg(short, long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic test corpus with oracle-score MOS labels.
    Synth {
        dir: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OracleKind {
    Sharpness,
    Noise,
    External,
}

/// Flags that override the config file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    oracle: Option<OracleKind>,
    /// Model service base URL (implies `--oracle external`).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    lpips_endpoint: Option<String>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_boundaries: Option<usize>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    t_max: Option<u32>,
    #[arg(long)]
    split_threshold: Option<f64>,
    /// Worker threads; 0 means one per CPU.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    crop_seed: Option<u64>,
    #[arg(long)]
    crop_size: Option<usize>,
    /// Directory of high-quality PNGs to use as texture donors.
    #[arg(long)]
    donors: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<CampaignConfig> {
        let mut cfg = match &self.config {
            Some(p) => CampaignConfig::load(p)?,
            None => CampaignConfig::default(),
        };
        match (self.oracle, &self.endpoint) {
            (_, Some(e)) => cfg.oracle = OracleSpec::external(e.clone()),
            (Some(OracleKind::Sharpness), None) => cfg.oracle = OracleSpec::sharpness(),
            (Some(OracleKind::Noise), None) => cfg.oracle = OracleSpec::noise(),
            (Some(OracleKind::External), None) => {
                if !matches!(cfg.oracle, OracleSpec::External { .. }) {
                    bail!("--oracle external needs --endpoint or an endpoint in the config");
                }
            }
            (None, None) => {}
        }
        if self.oracle.is_some_and(|k| k != OracleKind::External) && self.endpoint.is_some() {
            bail!("--endpoint only applies to the external oracle");
        }
        if let Some(v) = &self.lpips_endpoint {
            cfg.lpips_endpoint = Some(v.clone());
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.seed {
            cfg.attack.seed = v;
        }
        if let Some(v) = self.n_boundaries {
            cfg.attack.n_boundaries = v;
        }
        if let Some(v) = self.gamma0 {
            cfg.attack.gamma0 = Gamma::from_f64(v)?;
        }
        if let Some(v) = self.t_max {
            cfg.attack.t_max = v;
        }
        if let Some(v) = self.split_threshold {
            cfg.attack.split_threshold = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.crop_seed {
            cfg.crop_seed = v;
        }
        if let Some(v) = self.crop_size {
            cfg.crop_size = v;
        }
        if let Some(p) = &self.donors {
            cfg.donors = DonorSource::Directory {
                path: p.clone(),
                sigma: jndattack::directions::DEFAULT_DONOR_SIGMA,
            };
        }
        cfg.oracle = cfg.oracle.with_env_override();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn attack(image: PathBuf, out: PathBuf, trace: Option<PathBuf>, cfg: CampaignConfig) -> Result<ExitCode> {
    let x0 = load_png(&image).with_context(|| format!("reading {}", image.display()))?;
    let bank = match &cfg.donors {
        DonorSource::Procedural => TextureBank::procedural(x0.shape())?,
        DonorSource::Directory { path, sigma } => TextureBank::from_dir(path, x0.shape(), *sigma)?,
    };
    let mut oracle = OracleHandle::new(cfg.oracle.build()?, cfg.budget);
    let outcome = run_attack(&x0, &mut oracle, &bank, &cfg.attack)?;
    let bounds = match &outcome.bounds {
        Some(b) => b.clone(),
        None => jnd_box(&x0, &jnd_threshold_with(&x0, &cfg.attack.jnd))?,
    };
    let adv = quantize_into_box(&outcome.x_adv, &x0, &bounds);
    save_png(&adv, &out).with_context(|| format!("writing {}", out.display()))?;
    let score_after = OracleHandle::unlimited(cfg.oracle.build()?).score(&adv)?;
    let psnr = psnr(&x0, &adv)?;
    let summary = serde_json::json!({
        "image": image,
        "output": out,
        "oracle": oracle.descriptor(),
        "side": outcome.side,
        "score_before": outcome.score_before,
        "score_after": score_after,
        "gamma_final": outcome.gamma_final().map(|g| g.value()),
        "queries": outcome.total_queries,
        "stopped_reason": outcome.stopped_reason,
        "ssim": ssim(&x0, &adv)?,
        "psnr": if psnr.is_finite() { serde_json::json!(psnr) } else { serde_json::json!("inf") },
        "error": outcome.error,
    });
    if let Some(p) = trace {
        let t = serde_json::json!({ "ladder": outcome.ladder, "steps": outcome.trace });
        std::fs::write(&p, serde_json::to_string_pretty(&t)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if outcome.score_before.is_some() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn campaign(data: PathBuf, mos: Option<PathBuf>, out: Option<PathBuf>, cfg: CampaignConfig) -> Result<ExitCode> {
    let mos = mos.unwrap_or_else(|| data.join("mos.csv"));
    let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("jndattack-out"));
    let manifest = load_dataset_with(&data, &mos, cfg.crop_seed, cfg.crop_size)?;
    log::info!("{} images from {}", manifest.len(), mos.display());
    match run_campaign(&cfg, &manifest, &out) {
        Ok(report) => {
            print!("{}", report.to_markdown());
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ Error::CampaignFailed { .. }) => {
            eprintln!("error: {e}; partial reports are in {}", out.display());
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let run = || -> Result<ExitCode> {
        match cli.command {
            Command::Attack { image, out, trace, opts } => attack(image, out, trace, opts.resolve()?),
            Command::Campaign { data, mos, out, opts } => campaign(data, mos, out, opts.resolve()?),
            Command::Score { images, opts } => {
                let cfg = opts.resolve()?;
                let mut oracle = OracleHandle::unlimited(cfg.oracle.build()?);
                for p in images {
                    let img = load_png(&p).with_context(|| format!("reading {}", p.display()))?;
                    println!("{}\t{}", p.display(), oracle.score(&img)?);
                }
                Ok(ExitCode::SUCCESS)
            }
            Command::Report { report, format, out } => {
                let r = CampaignReport::read(&report).with_context(|| format!("reading {}", report.display()))?;
                match out {
                    Some(p) => emit_report(&r, format.into(), p)?,
                    None => print!(
                        "{}",
                        match format {
                            Format::Json => r.to_json()?,
                            Format::Csv => r.to_csv()?,
                            Format::Markdown => r.to_markdown(),
                        }
                    ),
                }
                Ok(ExitCode::SUCCESS)
            }
            Command::Synth { dir, opts } => {
                let cfg = opts.resolve()?;
                let rows = write_synthetic_corpus(&dir, cfg.oracle.build()?.as_mut())?;
                println!("wrote {} images and mos.csv to {}", rows.len(), dir.display());
                Ok(ExitCode::SUCCESS)
            }
        }
    };
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
