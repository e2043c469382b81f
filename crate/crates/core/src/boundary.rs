//! Score boundaries, the gamma ladder and the iterative attack driver.

use crate::directions::{combined_mask_with, LowFrequencySampler, MaskParams, TextureBank, DEFAULT_LOW_FREQ_FRACTION};
use crate::error::{Error, Result};
use crate::geometry::{single_step_attack, StepContext, StepStatus, ThetaSchedule};
use crate::imageops::{BinaryMask, Image};
use crate::jnd::{jnd_box, jnd_threshold_with, JndBox, JndParams};
use crate::oracle::OracleHandle;
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::fmt;

pub const MOS_MAX: f64 = 100.0;
pub const MOS_MIN: f64 = 0.0;
pub const DEFAULT_SPLIT: f64 = 50.0;

/// Which way the attack pushes the score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Predicted low quality; the attack raises the score.
    LowQuality,
    /// Predicted high quality; the attack lowers the score.
    HighQuality,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::LowQuality => 1.0,
            Side::HighQuality => -1.0,
        }
    }
}

pub fn side_of(score0: f64) -> Side {
    side_with_threshold(score0, DEFAULT_SPLIT)
}

/// Scores strictly above `threshold` are high quality.
pub fn side_with_threshold(score0: f64, threshold: f64) -> Side {
    if score0 > threshold {
        Side::HighQuality
    } else {
        Side::LowQuality
    }
}

pub fn gamma_threshold(score0: f64, gamma: f64, side: Side) -> f64 {
    match side {
        Side::LowQuality => score0 + gamma * (MOS_MAX - score0),
        Side::HighQuality => score0 + gamma * (MOS_MIN - score0),
    }
}

pub fn is_gamma_success(score0: f64, score_adv: f64, gamma: f64, side: Side) -> bool {
    let t = gamma_threshold(score0, gamma, side);
    match side {
        Side::LowQuality => score_adv > t,
        Side::HighQuality => score_adv < t,
    }
}

/// A ladder level kept as an exact fraction, so halving and doubling steps
/// and the early-stop gap comparison carry no rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gamma(Ratio<i64>);

impl Gamma {
    pub const ZERO: Gamma = Gamma(Ratio::new_raw(0, 1));

    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        Gamma(Ratio::new(numer, denom))
    }

    /// The simplest fraction within rounding of `v` (so `0.01` becomes `1/100`).
    pub fn from_f64(v: f64) -> Result<Self> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma {v} must be finite and non-negative")));
        }
        Ratio::<i64>::approximate_float(v)
            .map(Gamma)
            .ok_or_else(|| Error::InvalidParameter(format!("gamma {v} has no rational form")))
    }

    pub fn ratio(self) -> Ratio<i64> {
        self.0
    }

    /// Nearest double to the fraction (both parts are exact in f64 here).
    pub fn value(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn gap(self, prev: Gamma) -> Gamma {
        Gamma(self.0 - prev.0)
    }

    /// `gamma - (gamma - prev) / 2`
    pub fn decrease(self, prev: Gamma) -> Gamma {
        Gamma(self.0 - (self.0 - prev.0) / 2)
    }

    /// `gamma + (gamma - prev)`
    pub fn increase(self, prev: Gamma) -> Gamma {
        Gamma(self.0 + (self.0 - prev.0))
    }

    /// `gamma + 2 (gamma - prev)`, the level that triggers an increase.
    pub fn overshoot(self, prev: Gamma) -> Gamma {
        Gamma(self.0 + (self.0 - prev.0) * 2)
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Gamma::from_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub gamma: Gamma,
    pub achieved: bool,
}

/// Effective gamma values, seeded with `gamma_-1 = 0` and `gamma_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaLadder {
    seed: [Gamma; 2],
    entries: Vec<LadderEntry>,
}

impl GammaLadder {
    pub fn new(gamma0: Gamma) -> Self {
        Self {
            seed: [Gamma::ZERO, gamma0],
            entries: Vec::new(),
        }
    }

    pub fn gamma0(&self) -> Gamma {
        self.seed[1]
    }

    pub fn entries(&self) -> &[LadderEntry] {
        &self.entries
    }

    pub fn push(&mut self, gamma: Gamma, achieved: bool) {
        self.entries.push(LadderEntry { gamma, achieved });
    }

    fn effective(&self) -> impl Iterator<Item = Gamma> + '_ {
        self.seed
            .iter()
            .copied()
            .chain(self.entries.iter().filter(|e| e.achieved).map(|e| e.gamma))
    }

    /// The last two effective values, most recent last.
    pub fn last_two(&self) -> (Gamma, Gamma) {
        let v: Vec<Gamma> = self.effective().collect();
        (v[v.len() - 2], v[v.len() - 1])
    }

    pub fn last(&self) -> Gamma {
        self.last_two().1
    }
}

/// `gamma_i = gamma_{i-1} + (gamma_{i-1} - gamma_{i-2})` on effective values.
pub fn next_gamma(ladder: &GammaLadder) -> Gamma {
    let (a, b) = ladder.last_two();
    b.increase(a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub n_boundaries: usize,
    pub gamma0: Gamma,
    pub t_max: u32,
    pub split_threshold: f64,
    pub early_stop_eps: Gamma,
    pub theta: ThetaSchedule,
    pub low_freq_fraction: f64,
    pub mask: MaskParams,
    pub jnd: JndParams,
    pub seed: u64,
    /// Keep a copy of every accepted intermediate point in the trace.
    pub keep_points: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            n_boundaries: 20,
            gamma0: Gamma::from_ratio(1, 100),
            t_max: 200,
            split_threshold: DEFAULT_SPLIT,
            early_stop_eps: Gamma::from_ratio(1, 400),
            theta: ThetaSchedule::default(),
            low_freq_fraction: DEFAULT_LOW_FREQ_FRACTION,
            mask: MaskParams::default(),
            jnd: JndParams::default(),
            seed: 0,
            keep_points: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma0 <= Gamma::ZERO {
            return Err(Error::Config("gamma0 must be positive".into()));
        }
        if self.early_stop_eps <= Gamma::ZERO {
            return Err(Error::Config("early_stop_eps must be positive".into()));
        }
        if self.theta.coarse_steps < 2 {
            return Err(Error::Config("theta.coarse_steps must be at least 2".into()));
        }
        if !self.split_threshold.is_finite() {
            return Err(Error::Config("split_threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppedReason {
    LadderComplete,
    EarlyStop,
    /// Query budget exhausted, or the oracle stopped answering.
    Budget,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepTrace {
    pub index: usize,
    pub gamma_requested: Gamma,
    pub gamma: Gamma,
    pub achieved: bool,
    pub queries: u64,
    pub theta_star: Option<f64>,
    pub status: StepStatus,
    pub score: Option<f64>,
    pub decreases: u32,
    pub increases: u32,
    pub u_attempts: u32,
    #[serde(skip)]
    pub point: Option<Image>,
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub x_adv: Image,
    /// `None` only when the budget did not cover the initial query.
    pub score_before: Option<f64>,
    pub score_after: Option<f64>,
    pub side: Option<Side>,
    pub ladder: Vec<LadderEntry>,
    pub trace: Vec<StepTrace>,
    pub initial_queries: u64,
    pub total_queries: u64,
    pub stopped_reason: StoppedReason,
    pub error: Option<String>,
    pub mask_fallback: bool,
    pub bounds: Option<JndBox>,
}

impl AttackOutcome {
    /// The last achieved gamma, if any step succeeded.
    pub fn gamma_final(&self) -> Option<Gamma> {
        self.ladder.iter().rev().find(|e| e.achieved).map(|e| e.gamma)
    }

    pub fn succeeded(&self) -> bool {
        self.gamma_final().is_some()
    }
}

/// Runs the full ladder against `oracle`, which carries the query budget.
pub fn run_attack(x0: &Image, oracle: &mut OracleHandle, bank: &TextureBank, config: &AttackConfig) -> Result<AttackOutcome> {
    config.validate()?;
    crate::imageops::check_shape(bank.shape(), x0.shape())?;
    let start = oracle.used();
    let mut outcome = AttackOutcome {
        x_adv: x0.clone(),
        score_before: None,
        score_after: None,
        side: None,
        ladder: Vec::new(),
        trace: Vec::new(),
        initial_queries: 0,
        total_queries: 0,
        stopped_reason: StoppedReason::Budget,
        error: None,
        mask_fallback: false,
        bounds: None,
    };
    let score0 = match oracle.score(x0) {
        Ok(s) => s,
        Err(e) if e.is_oracle_stop() => {
            outcome.error = Some(e.to_string());
            outcome.total_queries = oracle.used() - start;
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    outcome.initial_queries = oracle.used() - start;
    outcome.score_before = Some(score0);
    outcome.score_after = Some(score0);
    let side = side_with_threshold(score0, config.split_threshold);
    outcome.side = Some(side);

    let bounds = jnd_box(x0, &jnd_threshold_with(x0, &config.jnd))?;
    let mut mask = combined_mask_with(x0, &config.mask)?;
    if mask.is_empty() {
        log::warn!("attack mask is empty; attacking all pixels");
        mask = BinaryMask::ones(x0.height(), x0.width());
        outcome.mask_fallback = true;
    }
    let sampler = LowFrequencySampler::new(x0, config.low_freq_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ladder = GammaLadder::new(config.gamma0);
    let mut x = x0.clone();
    let mut reason = StoppedReason::LadderComplete;

    for index in 1..=config.n_boundaries {
        let (gamma_prev, requested) = (ladder.last(), next_gamma(&ladder));
        let mut ctx = StepContext {
            oracle: &mut *oracle,
            bank,
            mask: &mask,
            bounds: &bounds,
            v_sampler: &sampler,
            score0,
            side,
            t_max: config.t_max,
            theta: config.theta,
            early_stop_eps: Some(config.early_stop_eps),
            rng: &mut rng,
        };
        let step = single_step_attack(&x, requested, gamma_prev, &mut ctx)?;
        log::debug!(
            "step {index}: gamma {} -> {} {:?} ({} queries)",
            requested,
            step.gamma_final,
            step.status,
            step.queries_used
        );
        ladder.push(step.gamma_final, step.achieved);
        outcome.trace.push(StepTrace {
            index,
            gamma_requested: requested,
            gamma: step.gamma_final,
            achieved: step.achieved,
            queries: step.queries_used,
            theta_star: step.theta_star,
            status: step.status,
            score: step.score,
            decreases: step.decreases,
            increases: step.increases,
            u_attempts: step.u_attempts,
            point: (config.keep_points && step.achieved).then(|| step.x_next.clone()),
        });
        if step.achieved {
            x = step.x_next;
            outcome.score_after = step.score;
        }
        match step.status {
            StepStatus::Success => {}
            StepStatus::EarlyStopped => {
                reason = StoppedReason::EarlyStop;
                break;
            }
            StepStatus::Exhausted => {
                reason = StoppedReason::Budget;
                outcome.error = step.stop_error;
                break;
            }
        }
    }
    outcome.x_adv = x;
    outcome.ladder = ladder.entries().to_vec();
    outcome.total_queries = oracle.used() - start;
    outcome.stopped_reason = reason;
    outcome.bounds = Some(bounds);
    Ok(outcome)
}

/// Seed for image `id` derived from the campaign seed.
pub fn image_seed(campaign_seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(campaign_seed.to_le_bytes());
    h.update(id.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
}

/// Attacks each `(id, image)` on the rayon pool, each with its own oracle
/// from `make_oracle` and a seed derived from `(config.seed, id)`. Results
/// come back in input order.
pub fn run_attacks_parallel<F>(
    images: &[(String, Image)],
    bank: &TextureBank,
    config: &AttackConfig,
    make_oracle: F,
) -> Vec<Result<AttackOutcome>>
where
    F: Fn(&str) -> Result<OracleHandle> + Sync,
{
    use rayon::prelude::*;
    images
        .par_iter()
        .map(|(id, img)| {
            let mut oracle = make_oracle(id)?;
            let cfg = AttackConfig {
                seed: image_seed(config.seed, id),
                ..config.clone()
            };
            run_attack(img, &mut oracle, bank, &cfg)
        })
        .collect()
}
