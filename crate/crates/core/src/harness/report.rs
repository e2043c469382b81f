use crate::boundary::{Side, StoppedReason};
use crate::error::{Error, Result};
use crate::metrics::{krocc, mae, plcc, srocc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt::Write as _;
use std::path::Path;

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`
/// (JSON has no literal for them).
pub mod float_or_inf {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&fmt_special(*v))
        }
    }

    pub(crate) fn fmt_special(v: f64) -> String {
        if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("unexpected float {other:?}"))),
            },
        }
    }
}

pub mod opt_float_or_inf {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(v) => float_or_inf::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "float_or_inf")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// Correlations are `None` when undefined (constant scores).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub srocc: Option<f64>,
    pub plcc: Option<f64>,
    pub krocc: Option<f64>,
    pub mae: Option<f64>,
}

impl MetricBlock {
    pub fn compute(pred: &[f64], mos: &[f64]) -> Self {
        Self {
            srocc: srocc(pred, mos).ok(),
            plcc: plcc(pred, mos).ok(),
            krocc: krocc(pred, mos).ok(),
            mae: mae(pred, mos).ok(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub id: String,
    pub mos: f64,
    pub status: RowStatus,
    pub side: Option<Side>,
    pub score_before: Option<f64>,
    pub score_after: Option<f64>,
    pub gamma_final: Option<f64>,
    pub steps_achieved: usize,
    pub queries: u64,
    pub stopped_reason: Option<StoppedReason>,
    #[serde(with = "opt_float_or_inf")]
    pub ssim: Option<f64>,
    #[serde(with = "opt_float_or_inf")]
    pub psnr: Option<f64>,
    pub lpips: Option<f64>,
    pub adv_png: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub oracle: String,
    pub images: usize,
    pub attacked: usize,
    pub failed: usize,
    pub original: MetricBlock,
    pub ours: MetricBlock,
    #[serde(with = "opt_float_or_inf")]
    pub mean_ssim: Option<f64>,
    #[serde(with = "opt_float_or_inf")]
    pub mean_psnr: Option<f64>,
    pub mean_lpips: Option<f64>,
    pub total_queries: u64,
    pub config: serde_json::Value,
    pub rows: Vec<ImageRow>,
}

impl CampaignReport {
    /// The campaign succeeds unless more than half of the images failed.
    pub fn succeeded(&self) -> bool {
        self.images > 0 && 2 * self.failed <= self.images
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_markdown(&self) -> String {
        let cell = |v: Option<f64>| match v {
            Some(v) if v.is_finite() => format!("{v:.4}"),
            Some(v) => float_or_inf::fmt_special(v),
            None => "-".into(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "# Attack report\n");
        let _ = writeln!(out, "Oracle: `{}`\n", self.oracle);
        let _ = writeln!(
            out,
            "Images: {} attacked, {} failed, {} queries in total.\n",
            self.attacked, self.failed, self.total_queries
        );
        let _ = writeln!(out, "| Method | SROCC↓ | PLCC↓ | KROCC↓ | MAE↑ | SSIM↑ | PSNR↑ |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for (name, b, ssim, psnr) in [
            ("Original", &self.original, None, None),
            ("Ours", &self.ours, self.mean_ssim, self.mean_psnr),
        ] {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} | {} | {} | {} |",
                cell(b.srocc),
                cell(b.plcc),
                cell(b.krocc),
                cell(b.mae),
                cell(ssim),
                cell(psnr)
            );
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "id",
            "mos",
            "status",
            "side",
            "score_before",
            "score_after",
            "gamma_final",
            "steps_achieved",
            "queries",
            "stopped_reason",
            "ssim",
            "psnr",
            "lpips",
            "adv_png",
            "error",
        ])?;
        let num = |v: Option<f64>| match v {
            Some(v) if v.is_finite() => v.to_string(),
            Some(v) => float_or_inf::fmt_special(v),
            None => String::new(),
        };
        let tag = |v: serde_json::Value| v.as_str().map(str::to_string).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                r.mos.to_string(),
                tag(serde_json::to_value(r.status)?),
                tag(serde_json::to_value(r.side)?),
                num(r.score_before),
                num(r.score_after),
                num(r.gamma_final),
                r.steps_achieved.to_string(),
                r.queries.to_string(),
                tag(serde_json::to_value(r.stopped_reason)?),
                num(r.ssim),
                num(r.psnr),
                num(r.lpips),
                r.adv_png.clone().unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "per_image.csv",
            ReportFormat::Markdown => "report.md",
        }
    }
}

pub fn emit_report(report: &CampaignReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv()?,
        ReportFormat::Markdown => report.to_markdown(),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes all three formats into `dir` under their standard names.
pub fn emit_all(report: &CampaignReport, dir: impl AsRef<Path>) -> Result<()> {
    for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        emit_report(report, f, dir.as_ref().join(f.file_name()))?;
    }
    Ok(())
}
