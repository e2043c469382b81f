//! Campaign orchestration: datasets, attack fan-out, and reports.

mod campaign;
mod config;
mod dataset;
mod report;
mod synthetic;

pub use campaign::{quantize_into_box, run_campaign, run_campaign_detailed, ImageResult};
pub use config::{CampaignConfig, DonorSource, OracleSpec, ENDPOINT_ENV};
pub use dataset::{crop_for, load_dataset, load_dataset_with, Crop, DatasetEntry, DatasetManifest};
pub use report::{emit_all, emit_report, CampaignReport, ImageRow, MetricBlock, ReportFormat, RowStatus};
pub use synthetic::{synthetic_images, write_synthetic_corpus, SYNTH_COUNT, SYNTH_SIDE};
