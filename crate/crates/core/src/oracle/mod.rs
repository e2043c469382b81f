//! The black-box scoring contract: image in, quality score out.
//!
//! An [`OracleHandle`] wraps one backend and enforces the per-attack query
//! budget. Identical images (by digest) are answered from a cache without
//! consuming budget, so re-verifying a point costs nothing.

mod external;

pub use external::{ExternalModel, LpipsClient, DEFAULT_TIMEOUT};

use crate::error::{Error, Result};
use crate::imageops::{blur_plane, sobel_plane, Image};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const DEFAULT_BUDGET: u64 = 8000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Native,
    External,
}

/// A quality model the attack may only query for scores.
pub trait QualityModel: Send {
    fn predict(&mut self, img: &Image) -> Result<f64>;

    fn describe(&self) -> String;

    fn backend(&self) -> Backend {
        Backend::Native
    }
}

impl<M: QualityModel + ?Sized> QualityModel for Box<M> {
    fn predict(&mut self, img: &Image) -> Result<f64> {
        (**self).predict(img)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }

    fn backend(&self) -> Backend {
        (**self).backend()
    }
}

/// Wraps a closure as a native model; handy for scripted test oracles.
pub struct FnModel<F> {
    name: String,
    f: F,
}

impl<F: FnMut(&Image) -> f64 + Send> FnModel<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F: FnMut(&Image) -> f64 + Send> QualityModel for FnModel<F> {
    fn predict(&mut self, img: &Image) -> Result<f64> {
        Ok((self.f)(img))
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `100 * logistic(gain * mean_sobel(luma) - bias)`: rewards high-frequency
/// energy, so texture perturbations raise it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessModel {
    pub gain: f64,
    pub bias: f64,
}

impl Default for SharpnessModel {
    fn default() -> Self {
        Self { gain: 40.0, bias: 1.0 }
    }
}

impl SharpnessModel {
    pub fn score(&self, img: &Image) -> f64 {
        let gray = img.to_gray();
        let (gx, gy) = sobel_plane(gray.data(), gray.height(), gray.width());
        let mean = gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| ((a * a + b * b).sqrt() / 4.0).min(1.0))
            .sum::<f64>()
            / gx.len() as f64;
        100.0 * logistic(self.gain * mean - self.bias)
    }
}

impl QualityModel for SharpnessModel {
    fn predict(&mut self, img: &Image) -> Result<f64> {
        Ok(self.score(img))
    }

    fn describe(&self) -> String {
        format!("native:sharpness(gain={}, bias={})", self.gain, self.bias)
    }
}

/// `100 * logistic(bias - gain * mean|luma - blur(luma, 1)| * scale)`:
/// penalizes high-frequency residual, so texture perturbations lower it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gain: f64,
    pub bias: f64,
    pub scale: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            gain: 200.0,
            bias: 1.0,
            scale: 1.0,
        }
    }
}

impl NoiseModel {
    pub fn score(&self, img: &Image) -> f64 {
        let gray = img.to_gray();
        let blurred = blur_plane(gray.data(), gray.height(), gray.width(), 1.0).expect("sigma 1 is valid");
        let residual = gray
            .data()
            .iter()
            .zip(&blurred)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / blurred.len() as f64;
        100.0 * logistic(self.bias - self.gain * residual * self.scale)
    }
}

impl QualityModel for NoiseModel {
    fn predict(&mut self, img: &Image) -> Result<f64> {
        Ok(self.score(img))
    }

    fn describe(&self) -> String {
        format!("native:noise(gain={}, bias={}, scale={})", self.gain, self.bias, self.scale)
    }
}

pub fn native_sharpness_oracle() -> SharpnessModel {
    SharpnessModel::default()
}

pub fn native_noise_oracle() -> NoiseModel {
    NoiseModel::default()
}

pub fn external_oracle(endpoint: &str, timeout: std::time::Duration) -> Result<ExternalModel> {
    ExternalModel::new(endpoint, timeout)
}

/// One entry of the audit trail kept by a handle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub digest: String,
    pub score: f64,
    pub sequence: u64,
}

/// A budgeted connection to one quality model, owned by one attack.
pub struct OracleHandle {
    model: Box<dyn QualityModel>,
    budget: u64,
    used: u64,
    cache: HashMap<[u8; 32], f64>,
    records: Vec<ScoreRecord>,
}

impl OracleHandle {
    pub fn new(model: Box<dyn QualityModel>, budget: u64) -> Self {
        Self {
            model,
            budget,
            used: 0,
            cache: HashMap::new(),
            records: Vec::new(),
        }
    }

    pub fn unlimited(model: Box<dyn QualityModel>) -> Self {
        Self::new(model, u64::MAX)
    }

    /// Scores `img`, consuming one query unless the image was seen before.
    pub fn score(&mut self, img: &Image) -> Result<f64> {
        let digest = img.digest();
        if let Some(&s) = self.cache.get(&digest) {
            return Ok(s);
        }
        if self.used >= self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        let score = self.model.predict(img)?;
        if !score.is_finite() {
            return Err(Error::OracleUnavailable(format!(
                "{} returned non-finite score {score}",
                self.model.describe()
            )));
        }
        self.used += 1;
        self.cache.insert(digest, score);
        self.records.push(ScoreRecord {
            digest: hex::encode(digest),
            score,
            sequence: self.used,
        });
        Ok(score)
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.used
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn descriptor(&self) -> String {
        self.model.describe()
    }

    pub fn backend(&self) -> Backend {
        self.model.backend()
    }
}

impl std::fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleHandle")
            .field("model", &self.model.describe())
            .field("budget", &self.budget)
            .field("used", &self.used)
            .finish()
    }
}
