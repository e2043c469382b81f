use super::config::{CampaignConfig, DonorSource};
use super::dataset::{DatasetEntry, DatasetManifest};
use super::report::{emit_all, CampaignReport, ImageRow, MetricBlock, RowStatus};
use crate::boundary::{image_seed, run_attack, AttackConfig, AttackOutcome};
use crate::directions::TextureBank;
use crate::error::{Error, Result};
use crate::imageops::{decode_png, encode_png, quantize, Image, Shape};
use crate::jnd::{jnd_box, jnd_threshold_with, JndBox};
use crate::metrics::{psnr, ssim};
use crate::oracle::{LpipsClient, OracleHandle, DEFAULT_TIMEOUT};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Snaps `x` to 8-bit levels, then walks any level that fell outside the
/// box one step at a time toward the level of `x0` until it is inside.
/// `x0` must itself lie on the 8-bit grid and inside the box.
pub fn quantize_into_box(x: &Image, x0: &Image, bounds: &JndBox) -> Image {
    let data = x
        .data()
        .iter()
        .zip(x0.data())
        .zip(bounds.lo().iter().zip(bounds.hi()))
        .map(|((&v, &v0), (&lo, &hi))| {
            let mut q = quantize(v) as i32;
            let target = quantize(v0) as i32;
            while !((lo..=hi).contains(&(q as f64 / 255.0))) && q != target {
                q += (target - q).signum();
            }
            q as f64 / 255.0
        })
        .collect();
    Image::new(x.height(), x.width(), x.channels(), data).expect("levels lie in [0, 1]")
}

/// Everything produced for one image, beyond its report row.
pub struct ImageResult {
    pub row: ImageRow,
    pub x0: Option<Image>,
    pub adv: Option<Image>,
    pub outcome: Option<AttackOutcome>,
}

/// One JSON line of the trace file.
#[derive(Serialize)]
struct TraceLine<'a> {
    id: &'a str,
    score_before: Option<f64>,
    score_after: Option<f64>,
    side: Option<crate::boundary::Side>,
    ladder: &'a [crate::boundary::LadderEntry],
    steps: &'a [crate::boundary::StepTrace],
    queries: u64,
    stopped_reason: crate::boundary::StoppedReason,
    error: Option<&'a str>,
    output_png: Option<&'a str>,
}

fn safe_name(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if stem.to_ascii_lowercase().ends_with(".png") {
        stem
    } else {
        format!("{stem}.png")
    }
}

fn build_banks(cfg: &CampaignConfig, shapes: impl IntoIterator<Item = Shape>) -> Result<BTreeMap<(usize, usize, usize), TextureBank>> {
    let mut banks = BTreeMap::new();
    for s in shapes {
        let key = (s.height, s.width, s.channels);
        if banks.contains_key(&key) {
            continue;
        }
        let bank = match &cfg.donors {
            DonorSource::Procedural => TextureBank::procedural(s)?,
            DonorSource::Directory { path, sigma } => TextureBank::from_dir(path, s, *sigma)?,
        };
        banks.insert(key, bank);
    }
    Ok(banks)
}

fn failed_row(entry: &DatasetEntry, err: &Error) -> ImageResult {
    ImageResult {
        row: ImageRow {
            id: entry.id.clone(),
            mos: entry.mos,
            status: RowStatus::Failed,
            side: None,
            score_before: None,
            score_after: None,
            gamma_final: None,
            steps_achieved: 0,
            queries: 0,
            stopped_reason: None,
            ssim: None,
            psnr: None,
            lpips: None,
            adv_png: None,
            error: Some(err.to_string()),
        },
        x0: None,
        adv: None,
        outcome: None,
    }
}

fn attack_one(
    entry: &DatasetEntry,
    x0: Image,
    cfg: &CampaignConfig,
    bank: &TextureBank,
    lpips: Option<&LpipsClient>,
    out_dir: &Path,
) -> Result<ImageResult> {
    let spec = cfg.oracle.clone().with_env_override();
    let mut eval = OracleHandle::unlimited(spec.build()?);
    let score_before = eval.score(&x0)?;
    let mut oracle = OracleHandle::new(spec.build()?, cfg.budget);
    let attack_cfg = AttackConfig {
        seed: image_seed(cfg.attack.seed, &entry.id),
        ..cfg.attack.clone()
    };
    let outcome = run_attack(&x0, &mut oracle, bank, &attack_cfg)?;
    let bounds = match &outcome.bounds {
        Some(b) => b.clone(),
        None => jnd_box(&x0, &jnd_threshold_with(&x0, &cfg.attack.jnd))?,
    };
    let png = encode_png(&quantize_into_box(&outcome.x_adv, &x0, &bounds))?;
    let name = format!("adv/{}", safe_name(&entry.id));
    std::fs::write(out_dir.join(&name), &png)?;
    let adv = decode_png(&png)?;
    let score_after = eval.score(&adv)?;
    let lpips = match lpips {
        Some(c) => Some(c.distance(&x0, &adv)?),
        None => None,
    };
    let row = ImageRow {
        id: entry.id.clone(),
        mos: entry.mos,
        status: RowStatus::Ok,
        side: outcome.side,
        score_before: Some(score_before),
        score_after: Some(score_after),
        gamma_final: outcome.gamma_final().map(|g| g.value()),
        steps_achieved: outcome.ladder.iter().filter(|e| e.achieved).count(),
        queries: outcome.total_queries,
        stopped_reason: Some(outcome.stopped_reason),
        ssim: Some(ssim(&x0, &adv)?),
        psnr: Some(psnr(&x0, &adv)?),
        lpips,
        adv_png: Some(name),
        error: outcome.error.clone(),
    };
    Ok(ImageResult {
        row,
        x0: Some(x0),
        adv: Some(adv),
        outcome: Some(outcome),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Runs the campaign and returns per-image artefacts alongside the report.
/// Outputs go to `out_dir`: `adv/*.png`, `traces.jsonl`, `report.json`,
/// `report.md` and `per_image.csv`.
pub fn run_campaign_detailed(
    cfg: &CampaignConfig,
    manifest: &DatasetManifest,
    out_dir: impl AsRef<Path>,
) -> Result<(CampaignReport, Vec<ImageResult>)> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir.join("adv"))?;

    let loaded: Vec<Result<Image>> = manifest.entries.iter().map(DatasetEntry::load).collect();
    let banks = build_banks(cfg, loaded.iter().filter_map(|r| r.as_ref().ok()).map(Image::shape))?;
    let lpips = cfg
        .lpips_endpoint
        .as_deref()
        .map(|e| LpipsClient::new(e, DEFAULT_TIMEOUT))
        .transpose()?;
    let descriptor = cfg.oracle.clone().with_env_override().build()?.describe();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<ImageResult> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .zip(loaded.into_par_iter())
            .map(|(entry, x0)| {
                let run = x0.and_then(|x0| {
                    let s = x0.shape();
                    let bank = &banks[&(s.height, s.width, s.channels)];
                    attack_one(entry, x0, cfg, bank, lpips.as_ref(), out_dir)
                });
                run.unwrap_or_else(|e| {
                    log::warn!("{}: {e}", entry.id);
                    failed_row(entry, &e)
                })
            })
            .collect()
    });

    let mut traces = std::io::BufWriter::new(std::fs::File::create(out_dir.join("traces.jsonl"))?);
    for r in &results {
        if let Some(o) = &r.outcome {
            let line = TraceLine {
                id: &r.row.id,
                score_before: o.score_before,
                score_after: o.score_after,
                side: o.side,
                ladder: &o.ladder,
                steps: &o.trace,
                queries: o.total_queries,
                stopped_reason: o.stopped_reason,
                error: o.error.as_deref(),
                output_png: r.row.adv_png.as_deref(),
            };
            serde_json::to_writer(&mut traces, &line)?;
            traces.write_all(b"\n")?;
        }
    }
    traces.flush()?;

    let ok: Vec<&ImageRow> = results.iter().map(|r| &r.row).filter(|r| r.status == RowStatus::Ok).collect();
    let mos: Vec<f64> = ok.iter().map(|r| r.mos).collect();
    let before: Vec<f64> = ok.iter().filter_map(|r| r.score_before).collect();
    let after: Vec<f64> = ok.iter().filter_map(|r| r.score_after).collect();
    let report = CampaignReport {
        oracle: descriptor,
        images: results.len(),
        attacked: ok.len(),
        failed: results.len() - ok.len(),
        original: MetricBlock::compute(&before, &mos),
        ours: MetricBlock::compute(&after, &mos),
        mean_ssim: mean(ok.iter().filter_map(|r| r.ssim)),
        mean_psnr: mean(ok.iter().filter_map(|r| r.psnr)),
        mean_lpips: mean(ok.iter().filter_map(|r| r.lpips)),
        total_queries: ok.iter().map(|r| r.queries).sum(),
        config: cfg.echo(),
        rows: results.iter().map(|r| r.row.clone()).collect(),
    };
    emit_all(&report, out_dir)?;
    if !report.succeeded() {
        return Err(Error::CampaignFailed {
            failed: report.failed,
            total: report.images,
        });
    }
    Ok((report, results))
}

pub fn run_campaign(cfg: &CampaignConfig, manifest: &DatasetManifest, out_dir: impl AsRef<Path>) -> Result<CampaignReport> {
    run_campaign_detailed(cfg, manifest, out_dir).map(|(r, _)| r)
}
